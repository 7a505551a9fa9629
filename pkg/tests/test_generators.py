import pytest

from hdlog.core import SYMBOLS, dump_facts
from hdlog.decomp import hypertree_width, is_complex
from hdlog.dred import materialise
from hdlog.generators import CollabParams, ExpParams, evaluate_expressions, gen_collab, gen_exp

import oracles


def test_collab_smallest():
    prog, facts = gen_collab(CollabParams(1, 1))
    assert len(prog) == 1
    assert oracles.names(facts) == {("CW", "a0", "b1"), ("CA", "a0", "c1"), ("CW", "a1", "a2"),
                                    ("CA", "a1", "a3"), ("PC", "b1", "d1"), ("PC", "c1", "d1")}


@pytest.mark.parametrize("n,k", [(1, 1), (3, 2), (50, 20)])
def test_collab_size(n, k):
    _, facts = gen_collab(CollabParams(n, k))
    assert len(facts) == 4 * n * k + 2


def test_collab_rejects_bad_params():
    with pytest.raises(ValueError):
        CollabParams(0, 3)


def test_exp_rules_shape():
    prog, _ = gen_exp(ExpParams(2, 2, 3, seed=1))
    ops = [r for r in prog if len(r.body) > 2]
    assert len(ops) == 3
    for r in ops:
        assert len(r.body) == 9
        assert is_complex(r)
        assert hypertree_width(r) > 1


def test_exp_deterministic():
    a = dump_facts(gen_exp(ExpParams(5, 4, 4, seed=7))[1])
    b = dump_facts(gen_exp(ExpParams(5, 4, 4, seed=7))[1])
    c = dump_facts(gen_exp(ExpParams(5, 4, 4, seed=8))[1])
    assert a == b and a != c


def test_exp_minimal_instance():
    prog, facts = gen_exp(ExpParams(1, 1, 1, seed=3))
    state = materialise(prog, facts)
    evals = [f for f in state.facts if f.pred == "eval"]
    assert len(evals) == 1


@pytest.mark.parametrize("mode", ["standard", "combined"])
def test_exp_values_match_direct_evaluation(mode):
    prog, facts = gen_exp(ExpParams(6, 5, 4, seed=2, domain=11))
    state = materialise(prog, facts, mode)
    got = {tuple(SYMBOLS.name(a) for a in f.args) for f in state.facts if f.pred == "eval"}
    assert got == evaluate_expressions(facts)


def test_exp_rejects_bad_params():
    with pytest.raises(ValueError):
        ExpParams(0, 1, 1)
