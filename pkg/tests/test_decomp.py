import pytest

from hdlog.core import Var, parse_program
from hdlog.decomp import (DecompNode, HypertreeDecomposition, MissingStatistics, RelationStats,
                          SearchSpaceExceeded, check_decomposition, decompose, estimate_cost,
                          from_blocks, hypertree_width, is_complex, node_estimate, single_node, width)
from hdlog.generators import PC_RULE, CollabParams, gen_collab

import oracles

TC = parse_program("T(?x,?z) :- E(?x,?y), T(?y,?z).").rule("r0")
TRIANGLE = parse_program("R(?x) :- E(?x,?y), E(?y,?z), E(?z,?x).").rule("r0")
PC = parse_program(PC_RULE).rule("r0")
x, y, z, z1, z2 = (Var(n) for n in ("x", "y", "z", "z1", "z2"))


def pc_two_node_hd():
    nodes = [DecompNode(0, (x, z1, y), (0, 2)), DecompNode(1, (x, z2, y), (1, 3))]
    return HypertreeDecomposition(PC, nodes, {0: None, 1: 0}, 0)


def test_pc_decomposition_valid_width_2():
    hd = pc_two_node_hd()
    assert check_decomposition(PC, hd)
    assert width(hd) == 2


def test_single_node_always_valid():
    for r in oracles.corpus():
        hd = single_node(r)
        assert check_decomposition(r, hd)
        assert width(hd) == len(r.body)


def test_condition_2_violation_names_variable():
    r = parse_program("Q(?x) :- A(?x,?y), B(?y,?w), C(?w,?x).").rule("r0")
    nodes = [DecompNode(0, (x, y), (0,)), DecompNode(1, (y, Var("w")), (1,)),
             DecompNode(2, (Var("w"), x), (2,))]
    res = check_decomposition(r, HypertreeDecomposition(r, nodes, {0: None, 1: 0, 2: 1}, 0))
    assert not res
    assert res.condition == 2 and res.witness == x


def test_condition_1_violation():
    nodes = [DecompNode(0, (x, y), (0,))]
    res = check_decomposition(TC, HypertreeDecomposition(TC, nodes, {0: None}, 0))
    assert not res and res.condition == 1


def test_condition_3_violation():
    nodes = [DecompNode(0, (x, y, z), (0,)), DecompNode(1, (y, z), (1,))]
    res = check_decomposition(TC, HypertreeDecomposition(TC, nodes, {0: None, 1: 0}, 0))
    assert not res and res.condition == 3


def test_condition_4_violation():
    r = parse_program("Q(?x) :- A(?x,?y), B(?y).").rule("r0")
    # the root projects y away although its own atom and the subtree below both use it
    nodes = [DecompNode(0, (x,), (0,)), DecompNode(1, (x, y), (0, 1))]
    res = check_decomposition(r, HypertreeDecomposition(r, nodes, {0: None, 1: 0}, 0))
    assert not res and res.condition == 4 and res.witness == 0


def test_tc_chain_width_1():
    hd = from_blocks(TC, [[0], [1]])
    assert check_decomposition(TC, hd) and width(hd) == 1


def test_decompose_examples():
    # joins that grow their inputs (T=100, V=10) make splitting worthwhile
    stats = RelationStats.uniform({"E": 2, "T": 2, "CW": 2, "CA": 2, "PC": 2}, 100, 10)
    assert width(decompose(TC, stats)) == 1
    hd = decompose(PC, stats)
    assert width(hd) == 2
    assert sorted(p.lam for p in hd.nodes) == [(0, 2), (1, 3)]
    assert width(decompose(TRIANGLE, stats, exhaustive=True)) == 2


def test_pc_under_uniform_stats():
    hd = decompose(PC, RelationStats.uniform({"CW": 2, "CA": 2, "PC": 2}))
    assert [p.lam for p in hd.nodes] == [(0, 2), (1, 3)]


def test_pc_with_data_stats():
    prog, facts = gen_collab(CollabParams(6, 3))
    hd = decompose(prog.rule("r0"), RelationStats.from_facts(facts, prog))
    assert [(p.lam, p.chi) for p in hd.nodes] == [((0, 2), (x, z1, y)), ((1, 3), (x, z2, y))]
    assert hd.parent == {0: None, 1: 0}


def test_is_complex():
    assert not is_complex(TC)
    assert is_complex(PC)
    assert is_complex(TRIANGLE)
    assert not is_complex(parse_program("P(?x) :- E(?x,?y).").rule("r0"))


def test_node_estimate_textbook():
    r = parse_program("Q(?a) :- R(?a,?b), S(?a,?c).").rule("r0")
    stats = RelationStats({"R": (100, (20, 100)), "S": (50, (10, 50))})
    size, work = node_estimate(list(r.body), stats)
    assert size == pytest.approx(250)
    assert work == pytest.approx(100 + 250)


def test_semijoin_term():
    r = parse_program("Q(?a) :- R(?a), S(?a).").rule("r0")
    stats = RelationStats({"R": (10, (10,)), "S": (20, (20,))})
    hd = from_blocks(r, [[0], [1]])
    assert estimate_cost(hd, stats) == pytest.approx(10 + 20 + 2 * (10 + 20))
    assert estimate_cost(single_node(r), stats) == pytest.approx(10 + 10 * 20 / 20)


def test_cost_invariant_under_renaming():
    a = parse_program("Q(?x) :- R(?x,?y), S(?y,?z), R(?z,?x).").rule("r0")
    b = parse_program("Q(?u) :- R(?u,?v), S(?v,?w), R(?w,?u).").rule("r0")
    stats = RelationStats({"R": (40, (8, 5)), "S": (30, (6, 9))})
    assert estimate_cost(decompose(a, stats), stats) == estimate_cost(decompose(b, stats), stats)


def test_missing_statistics():
    with pytest.raises(MissingStatistics):
        decompose(TC, RelationStats({"E": (5, (5, 5))}))


def test_search_bound():
    body = ", ".join(f"E(?v{i},?v{i + 1})" for i in range(13))
    r = parse_program(f"Q(?v0) :- {body}.").rule("r0")
    with pytest.raises(SearchSpaceExceeded):
        decompose(r, RelationStats.uniform({"E": 2}))


def test_decompose_always_valid_on_corpus():
    prog = oracles.corpus()
    stats = RelationStats.uniform(prog.arities(), 100, 10)
    for r in prog:
        hd = decompose(r, stats)
        assert check_decomposition(r, hd), r.id


def test_exhaustive_width_matches_brute_force():
    prog = oracles.corpus()
    stats = RelationStats.uniform(prog.arities())
    for r in prog:
        if len(r.body) > 6:
            continue
        expected = oracles.brute_width(r)
        assert width(decompose(r, stats, exhaustive=True)) == expected, r.id
        assert hypertree_width(r) == expected, r.id
        assert is_complex(r) == (expected > 1), r.id
