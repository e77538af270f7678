"""Implicational formulas over interned word atoms.

A token sequence ``w1 ... wn`` is encoded as the left-nested implication
chain ``((((w1->w2)->w3)->...)->wn)``.  This module owns the formula tree
representation, the chain <-> token-list conversions, the textual ``->``
notation, and the enumeration of suffix-prefix fragments (the left-nested
encodings of all contiguous token subsequences).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union


class FormulaError(Exception):
    """Base class for formula-layer errors."""


class EmptyTokenList(FormulaError):
    """A chain encoding was requested for zero tokens."""


class NotAChain(FormulaError):
    """The formula is not a left-nested chain (some consequent is compound)."""


class FormulaSyntaxError(FormulaError):
    """Malformed formula text; ``offset`` is the byte position of the error."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Atom:
    """A propositional atom: an interned word.

    ``id`` and ``surface`` are a bijection within one Interner/Vocab, so
    structural equality over both fields coincides with id equality there.
    """

    id: int
    surface: str


@dataclass(frozen=True)
class Imp:
    antecedent: "Formula"
    consequent: "Formula"


Formula = Union[Atom, Imp]


class Interner:
    """Bijective word <-> id table handing out :class:`Atom` values.

    Ids are dense, assigned in first-occurrence order.
    """

    def __init__(self, words: Iterable[str] = ()):
        self._words: list[str] = []
        self._index: dict[str, int] = {}
        for w in words:
            self.atom(w)

    def atom(self, surface: str) -> Atom:
        """Return the atom for ``surface``, interning it if new."""
        idx = self._index.get(surface)
        if idx is None:
            idx = len(self._words)
            self._words.append(surface)
            self._index[surface] = idx
        return Atom(idx, surface)

    def lookup(self, surface: str) -> Optional[Atom]:
        """Return the atom for ``surface`` if already interned, else None."""
        idx = self._index.get(surface)
        return None if idx is None else Atom(idx, surface)

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(self._words)

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, surface: str) -> bool:
        return surface in self._index


def list_to_impl(tokens: Sequence[Atom]) -> Formula:
    """Fold a non-empty token sequence into its left-nested chain."""
    if not tokens:
        raise EmptyTokenList("cannot encode an empty token sequence")
    acc: Formula = tokens[0]
    for tok in tokens[1:]:
        acc = Imp(acc, tok)
    return acc


def impl_to_list(f: Formula) -> list[Atom]:
    """Invert :func:`list_to_impl` on left-nested chains."""
    rev: list[Atom] = []
    node = f
    while isinstance(node, Imp):
        if not isinstance(node.consequent, Atom):
            raise NotAChain(f"compound consequent: {print_formula(node.consequent)}")
        rev.append(node.consequent)
        node = node.antecedent
    if not isinstance(node, Atom):  # pragma: no cover - Imp/Atom exhaust Formula
        raise NotAChain("malformed formula leaf")
    rev.append(node)
    rev.reverse()
    return rev


def suffix_prefixes(f: Formula) -> list[Formula]:
    """Enumerate the n(n+1)/2 chain encodings of all contiguous subsequences.

    Order matches the suffix-then-prefix generation: suffixes from the
    last token outward, and within each suffix the prefixes longest first.
    """
    tokens = impl_to_list(f)
    n = len(tokens)
    out: list[Formula] = []
    for i in range(n - 1, -1, -1):
        for j in range(n, i, -1):
            out.append(list_to_impl(tokens[i:j]))
    return out


_TOKEN_RE = re.compile(r"[a-z0-9_']+")
_SPACE_RE = re.compile(r"[ \t\r\n]+")


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Lex into (kind, value, char offset) triples; kinds: atom, arrow, lparen, rparen."""
    toks: list[tuple[str, str, int]] = []
    i = 0
    n = len(text)
    while i < n:
        m = _SPACE_RE.match(text, i)
        if m:
            i = m.end()
            continue
        m = _TOKEN_RE.match(text, i)
        if m:
            toks.append(("atom", m.group(), i))
            i = m.end()
            continue
        if text.startswith("->", i):
            toks.append(("arrow", "->", i))
            i += 2
            continue
        if text[i] == "(":
            toks.append(("lparen", "(", i))
            i += 1
            continue
        if text[i] == ")":
            toks.append(("rparen", ")", i))
            i += 1
            continue
        raise FormulaSyntaxError(
            f"unexpected character {text[i]!r}", _byte_offset(text, i)
        )
    return toks


def parse_formula(text: str, interner: Optional[Interner] = None) -> Formula:
    """Parse ``->`` notation (right-associative; parentheses group).

    Atoms are interned into ``interner`` (a fresh one if omitted), so all
    formulas meant to be compared must share one interner.
    """
    interner = interner if interner is not None else Interner()
    toks = _tokenize(text)
    pos = 0

    def peek() -> Optional[tuple[str, str, int]]:
        return toks[pos] if pos < len(toks) else None

    def error(message: str) -> FormulaSyntaxError:
        off = toks[pos][2] if pos < len(toks) else len(text)
        return FormulaSyntaxError(message, _byte_offset(text, off))

    def formula() -> Formula:
        left = operand()
        tok = peek()
        if tok is not None and tok[0] == "arrow":
            nonlocal pos
            pos += 1
            return Imp(left, formula())
        return left

    def operand() -> Formula:
        nonlocal pos
        tok = peek()
        if tok is None:
            raise error("expected atom or '('")
        kind, value, _ = tok
        if kind == "atom":
            pos += 1
            return interner.atom(value)
        if kind == "lparen":
            pos += 1
            inner = formula()
            closing = peek()
            if closing is None or closing[0] != "rparen":
                raise error("expected ')'")
            pos += 1
            return inner
        raise error("expected atom or '('")

    result = formula()
    if pos != len(toks):
        raise error("unexpected trailing input")
    return result


def print_formula(f: Formula) -> str:
    """Render with minimal parentheses: only implication antecedents get them."""
    if isinstance(f, Atom):
        return f.surface
    left = print_formula(f.antecedent)
    if isinstance(f.antecedent, Imp):
        left = f"({left})"
    return f"{left}->{print_formula(f.consequent)}"
