"""Independent oracles the tests check the package against.

Everything here is deliberately implemented by a different route from the
code under test: a history-checked exhaustive sequent search instead of
the committed four-rule prover, an environment-based normalizer instead
of the step rewriter, brute-force subsequence enumeration, central finite
differences instead of the hand-written backward pass, and an
all-logits-at-once loss instead of the streaming one.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from arrowlm.formula import Atom, Formula, Imp, Interner
from arrowlm.model import Gradients, ModelParams, forward_loss
from arrowlm.prover import App, Lam, ProofTerm, Var

# ---------------------------------------------------------------------------
# Exhaustive sequent search (loop-checked) for implicational intuitionistic
# provability.  Left rule keeps the used implication (contraction); cycles on
# a branch are cut by the history set; successes are absolute and memoized.
# ---------------------------------------------------------------------------


def lj_provable(goal: Formula, _memo={}) -> bool:
    def search(gamma: frozenset, goal: Formula, history: frozenset) -> bool:
        if goal in gamma:
            return True
        key = (gamma, goal)
        if _memo.get(key):
            return True
        if key in history:
            return False
        history = history | {key}
        if isinstance(goal, Imp):
            if search(gamma | {goal.antecedent}, goal.consequent, history):
                _memo[key] = True
                return True
        for f in gamma:
            if isinstance(f, Imp):
                if search(gamma, f.antecedent, history) and search(
                    gamma | {f.consequent}, goal, history
                ):
                    _memo[key] = True
                    return True
        return False

    return search(frozenset(), goal, frozenset())


def enumerate_formulas(atoms: list[Atom], max_nodes: int) -> list[Formula]:
    """Every formula tree with at most ``max_nodes`` implication nodes."""

    @lru_cache(maxsize=None)
    def exactly(n: int) -> tuple[Formula, ...]:
        if n == 0:
            return tuple(atoms)
        out = []
        for left in range(n):
            for a in exactly(left):
                for b in exactly(n - 1 - left):
                    out.append(Imp(a, b))
        return tuple(out)

    result: list[Formula] = []
    for n in range(max_nodes + 1):
        result.extend(exactly(n))
    exactly.cache_clear()
    return result


def random_formula(rng, atoms: list[Atom], max_depth: int) -> Formula:
    if max_depth == 0 or rng.random() < 0.4:
        return atoms[rng.randrange(len(atoms))]
    return Imp(
        random_formula(rng, atoms, max_depth - 1),
        random_formula(rng, atoms, max_depth - 1),
    )


# ---------------------------------------------------------------------------
# Environment-based (normalization-by-evaluation) lambda normalizer.
# ---------------------------------------------------------------------------


class _Closure:
    def __init__(self, bound, body, env):
        self.bound, self.body, self.env = bound, body, env


class _Neutral:
    def __init__(self, head, args=()):
        self.head, self.args = head, tuple(args)


def nbe_normal_form(term: ProofTerm) -> ProofTerm:
    def evaluate(t, env):
        if isinstance(t, Var):
            return env.get(t.name, _Neutral(t.name))
        if isinstance(t, Lam):
            return _Closure(t.bound, t.body, env)
        return apply(evaluate(t.fun, env), evaluate(t.arg, env))

    def apply(fun, arg):
        if isinstance(fun, _Closure):
            return evaluate(fun.body, {**fun.env, fun.bound: arg})
        return _Neutral(fun.head, fun.args + (arg,))

    counter = itertools.count(1)

    def reify(value) -> ProofTerm:
        if isinstance(value, _Closure):
            name = f"n{next(counter)}"
            return Lam(name, reify(apply(value, _Neutral(name))))
        out: ProofTerm = Var(value.head)
        for arg in value.args:
            out = App(out, reify(arg))
        return out

    return reify(evaluate(term, {}))


# ---------------------------------------------------------------------------
# Sequence helpers.
# ---------------------------------------------------------------------------


def contiguous_subsequences(tokens) -> set[tuple]:
    n = len(tokens)
    return {tuple(tokens[i:j]) for i in range(n) for j in range(i + 1, n + 1)}


def scan_matches(sentences, words) -> list[int]:
    """Sentence ids containing ``words`` contiguously (brute force)."""
    words = tuple(words)
    hits = []
    for sid, toks in enumerate(sentences):
        toks = tuple(toks)
        if any(toks[i : i + len(words)] == words for i in range(len(toks) - len(words) + 1)):
            hits.append(sid)
    return hits


# ---------------------------------------------------------------------------
# Numerical oracles.
# ---------------------------------------------------------------------------


def finite_difference_grads(
    params: ModelParams, tokens: np.ndarray, mask: np.ndarray, delta: float = 1e-4
) -> Gradients:
    """Central finite differences of the mean loss for every coordinate."""
    grads = Gradients.zeros_like(params)
    for (_, tensor), (_, out) in zip(params.tensors(), grads.tensors()):
        flat = tensor.reshape(-1)
        flat_out = out.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + delta
            up, _ = forward_loss(params, tokens, mask)
            flat[i] = original - delta
            down, _ = forward_loss(params, tokens, mask)
            flat[i] = original
            flat_out[i] = (up - down) / (2 * delta)
    return grads


def materialized_loss(params: ModelParams, tokens: np.ndarray, mask: np.ndarray) -> float:
    """Loss with all per-step logits stacked first, same summation order."""
    batch, width = tokens.shape
    h = np.broadcast_to(params.h0, (batch, params.d)).copy()
    all_logits = []
    for t in range(width - 1):
        s = np.tanh(params.emb[tokens[:, t]])
        z = h @ params.v
        pre = h + (z * s) @ params.u.T
        mu = pre.mean(axis=-1, keepdims=True)
        var = ((pre - mu) ** 2).mean(axis=-1, keepdims=True)
        h = params.gain * (pre - mu) / np.sqrt(var + params.eps) + params.bias
        all_logits.append(h @ params.w_out.T)
    total = 0.0
    rows = np.arange(batch)
    for t in range(width - 1):
        logits = all_logits[t]
        shifted = logits - logits.max(axis=-1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        nll = -logp[rows, tokens[:, t + 1]]
        total += float(np.sum(nll, where=mask[:, t], initial=0.0))
    return total / int(mask.sum())


def entropy_floor(fragments) -> float:
    """Information-theoretic lower bound on the mean training loss.

    A causal model's state after a prefix is a function of that prefix
    alone, so the best possible next-token distribution at each position
    is the empirical distribution over training items sharing the prefix.
    """
    context_counts: dict[tuple, dict[int, int]] = {}
    positions = 0
    for frag in fragments:
        for t in range(1, len(frag)):
            ctx = tuple(frag[:t])
            context_counts.setdefault(ctx, {})
            context_counts[ctx][frag[t]] = context_counts[ctx].get(frag[t], 0) + 1
            positions += 1
    total = 0.0
    for counts in context_counts.values():
        n = sum(counts.values())
        for c in counts.values():
            total += c * np.log(n / c)
    return total / positions


def dense_operator(params: ModelParams, token: int) -> np.ndarray:
    """Materialize M_t = I + U diag(tanh(emb_t)) V^T (tests only)."""
    s = np.tanh(params.emb[token])
    return np.eye(params.d, dtype=params.h0.dtype) + params.u @ np.diag(s) @ params.v.T


def random_params(
    vocab_size: int, d: int, r: int, seed: int, dtype=np.float64
) -> ModelParams:
    """A generic (mid-training-like) parameter point.

    The fresh initialization sits exactly at h0 = 0 where the first
    LayerNorm is at its var = 0 kink; numeric tests (finite differences,
    operator commutators) need a generic point instead.
    """
    rng = np.random.default_rng(seed)
    return ModelParams(
        h0=rng.normal(0, 1.0, d).astype(dtype),
        emb=rng.normal(0, 0.5, (vocab_size, r)).astype(dtype),
        u=rng.normal(0, 0.3, (d, r)).astype(dtype),
        v=rng.normal(0, 0.3, (d, r)).astype(dtype),
        gain=(1.0 + rng.normal(0, 0.1, d)).astype(dtype),
        bias=rng.normal(0, 0.1, d).astype(dtype),
        w_out=rng.normal(0, 0.3, (vocab_size, d)).astype(dtype),
    )
