"""Provability decisions, witness terms, type checking, normalization."""

import itertools
import random

import pytest

from arrowlm.formula import Imp, Interner, list_to_impl, parse_formula
from arrowlm.prover import (
    App,
    Lam,
    StepLimitExceeded,
    Var,
    alpha_eq,
    beta_normalize,
    format_term,
    prove,
    prove_with_term,
    type_check,
)

from oracles import enumerate_formulas, lj_provable, nbe_normal_form, random_formula

I = Interner()


def parse(text):
    return parse_formula(text, I)


class TestProve:
    def test_left_nested_permutation_counterexample(self):
        assert not prove(parse("((p->q)->r) -> ((q->p)->r)"))

    def test_right_nested_permutation_invariance(self):
        assert prove(parse("(p->q->r) -> (q->p->r)"))

    def test_modus_ponens_chain(self):
        assert prove(parse("((the->cat)->sits) -> (the->cat) -> sits"))

    def test_peirce_not_intuitionistic(self):
        assert not prove(parse("((p->q)->p)->p"))

    def test_continuation_theorems(self):
        for text in (
            "((p->q)->r) -> (p->q->r)",
            "(((p->q)->a)->b) -> (p->q)->(a->b)",
            "((e->p)->q)->(p->q)",
            "e -> (((e->a)->b)->c) -> ((a->b)->c)",
        ):
            assert prove(parse(text)), text

    def test_atom_unprovable(self):
        assert not prove(I.atom("p"))

    def test_with_context(self):
        p, q = I.atom("p"), I.atom("q")
        assert prove(q, (p, Imp(p, q)))
        assert not prove(q, (p,))

    def test_completion_of_chains(self):
        # chain of n tokens -> (prefix chain of n-1) -> last atom, n = 2..12
        for n in range(2, 13):
            toks = [I.atom(f"w{i}") for i in range(n)]
            full = list_to_impl(toks)
            prefix = list_to_impl(toks[:-1])
            assert prove(Imp(full, Imp(prefix, toks[-1]))), n

    def test_order_sensitivity_of_chains(self):
        # for each length some permutation of the chain is not implied by it
        for n in range(3, 7):
            toks = [I.atom(f"w{i}") for i in range(n)]
            chain = list_to_impl(toks)
            found = False
            for perm in itertools.permutations(toks):
                if list(perm) == toks:
                    continue
                if not prove(Imp(chain, list_to_impl(list(perm)))):
                    found = True
                    break
            assert found, n


class TestProveWithTerm:
    def test_k_combinator(self):
        term = prove_with_term(parse("p->q->p"))
        assert alpha_eq(term, Lam("a", Lam("b", Var("a"))))

    def test_s_combinator(self):
        term = prove_with_term(parse("(p->q->r)->(p->q)->p->r"))
        expected = Lam(
            "x",
            Lam("y", Lam("z", App(App(Var("x"), Var("z")), App(Var("y"), Var("z"))))),
        )
        assert alpha_eq(term, expected)

    def test_modus_ponens_term(self):
        term = prove_with_term(parse("p->(p->q)->q"))
        assert alpha_eq(term, Lam("x", Lam("y", App(Var("y"), Var("x")))))

    def test_atom_has_no_witness(self):
        assert prove_with_term(I.atom("p")) is None

    def test_continuation_theorem_witnesses_type_check(self):
        for text in (
            "((p->q)->r) -> (p->q->r)",
            "(((p->q)->a)->b) -> (p->q)->(a->b)",
            "((e->p)->q)->(p->q)",
            "e -> (((e->a)->b)->c) -> ((a->b)->c)",
        ):
            f = parse(text)
            term = prove_with_term(f)
            assert term is not None and type_check(term, f), text

    def test_agreement_with_prove(self):
        rng = random.Random(11)
        atoms = [I.atom(w) for w in "p q r s".split()]
        for _ in range(2000):
            f = random_formula(rng, atoms, 6)
            assert prove(f) == (prove_with_term(f) is not None)


class TestTypeCheck:
    def test_identity(self):
        assert type_check(Lam("x", Var("x")), parse("p->p"))

    def test_s_term_against_s_type(self):
        f = parse("(p->q->r)->(p->q)->p->r")
        assert type_check(prove_with_term(f), f)

    def test_atom_mismatch(self):
        assert not type_check(Lam("x", Var("x")), parse("p->q"))

    def test_unbound_variable(self):
        assert not type_check(Var("x"), I.atom("p"))

    def test_env_lookup(self):
        p = I.atom("p")
        assert type_check(Var("x"), p, {"x": p})


class TestBetaNormalize:
    def test_simple_redex(self):
        t = App(Lam("x", Var("x")), Var("y"))
        assert beta_normalize(t) == Var("y")

    def test_k_reduction(self):
        k = Lam("x", Lam("y", Var("x")))
        t = App(App(k, Var("a")), Var("b"))
        assert beta_normalize(t) == Var("a")

    def test_skk_is_identity(self):
        s = prove_with_term(parse("(p->q->r)->(p->q)->p->r"))
        k = prove_with_term(parse("p->q->p"))
        skk = App(App(App(s, k), k), Var("arg"))
        assert beta_normalize(skk) == Var("arg")
        assert alpha_eq(nbe_normal_form(skk), Var("arg"))

    def test_capture_avoidance(self):
        # (\x.\y.x) y must not capture the free y
        t = App(Lam("x", Lam("y", Var("x"))), Var("y"))
        normal = beta_normalize(t)
        assert isinstance(normal, Lam)
        assert normal.body == Var("y")
        assert normal.bound != "y"
        assert alpha_eq(normal, nbe_normal_form(t))

    def test_step_limit(self):
        omega = Lam("x", App(Var("x"), Var("x")))
        with pytest.raises(StepLimitExceeded):
            beta_normalize(App(omega, omega), max_steps=50)

    def test_idempotence_on_witnesses(self):
        rng = random.Random(3)
        atoms = [I.atom(w) for w in "p q".split()]
        for _ in range(300):
            f = random_formula(rng, atoms, 6)
            term = prove_with_term(f)
            if term is None:
                continue
            normal = beta_normalize(term)
            assert beta_normalize(normal) == normal
            assert type_check(normal, f)


class TestOracleAgreement:
    def test_small_formulas_against_sequent_search(self):
        atoms = [I.atom("p"), I.atom("q")]
        formulas = enumerate_formulas(atoms, 4)
        assert len(formulas) == 2 + 4 + 16 + 80 + 448
        for f in formulas:
            assert prove(f) == lj_provable(f)

    def test_witnesses_type_check_small(self):
        atoms = [I.atom("p"), I.atom("q")]
        for f in enumerate_formulas(atoms, 5):
            term = prove_with_term(f)
            if term is not None:
                assert type_check(term, f)


class TestFormatTerm:
    def test_shapes(self):
        t = Lam("x", App(Var("x"), Lam("y", Var("y"))))
        assert format_term(t) == "\\x.x (\\y.y)"
        assert format_term(App(App(Var("f"), Var("a")), Var("b"))) == "f a b"
