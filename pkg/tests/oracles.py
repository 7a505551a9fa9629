"""Slow, obviously-correct reference implementations used by the tests."""
from __future__ import annotations

import itertools
import random

from hdlog.core import SYMBOLS, Atom, Var, fact, parse_program
from hdlog.decomp import DecompNode, HypertreeDecomposition, check_decomposition


def matches(rule, facts):
    """All substitutions (dicts) mapping the body into ``facts`` by nested loops."""
    facts = list(facts)
    out = []

    def rec(i, env):
        if i == len(rule.body):
            out.append(dict(env))
            return
        atom = rule.body[i]
        for f in facts:
            if f.pred != atom.pred or len(f.args) != len(atom.args):
                continue
            new = dict(env)
            ok = True
            for a, c in zip(atom.args, f.args):
                if isinstance(a, Var):
                    if new.setdefault(a, c) != c:
                        ok = False
                        break
                elif a != c:
                    ok = False
                    break
            if ok:
                rec(i + 1, new)

    rec(0, {})
    return out


def ground(atom, env):
    return Atom(atom.pred, tuple(env[a] if isinstance(a, Var) else a for a in atom.args))


def apply_rule(rule, facts):
    return {ground(rule.head, env) for env in matches(rule, facts)}


def naive_mat(program, explicit):
    current = set(explicit)
    while True:
        new = set(current)
        for r in program:
            new |= apply_rule(r, current)
        if new == current:
            return current
        current = new


def rule_delta(rule, facts, delta):
    """Heads of instances inside ``facts`` that use at least one fact of ``delta``."""
    delta = set(delta)
    out = set()
    for env in matches(rule, facts):
        if any(ground(b, env) in delta for b in rule.body):
            out.add(ground(rule.head, env))
    return out


def add_contract(rule, store, delta_plus):
    return {h for h in rule_delta(rule, store, delta_plus) if h not in store}


def del_contract(rule, store, delta_minus):
    rest = set(store) - set(delta_minus)
    return {h for h in rule_delta(rule, store, delta_minus) if h in rest}


def red_contract(rule, store, delta):
    return apply_rule(rule, store) & set(delta)


# -- random programs --------------------------------------------------------

CHAIN_RULES = [
    "T(?x,?y) :- E(?x,?y).",
    "T(?x,?z) :- E(?x,?y), T(?y,?z).",
    "T(?x,?z) :- T(?x,?y), T(?y,?z).",
    "S(?x,?z) :- E(?x,?y), F(?y,?z).",
    "S(?x,?y) :- T(?x,?y), F(?y,?x).",
    "U(?x) :- E(?x,?y), F(?y,?z), E(?z,?x).",
    "PC(?x,?y) :- CW(?x,?y), E(?y,?y).",
    "CW(?x,?y) :- E(?x,?y), F(?x,?y).",
]
PC_TEXT = "PC(?x,?y) :- CW(?x,?z1), CA(?x,?z2), PC(?z1,?y), PC(?z2,?y)."
BASE_PREDS = {"E": 2, "F": 2, "CW": 2, "CA": 2, "PC": 2, "T": 2, "S": 2, "U": 1}


def random_program(rng: random.Random, max_rules=4, pc_probability=0.6):
    k = rng.randint(1, max_rules)
    texts = []
    if rng.random() < pc_probability:
        texts.append(PC_TEXT)
    while len(texts) < k:
        t = rng.choice(CHAIN_RULES)
        if t not in texts:
            texts.append(t)
    rng.shuffle(texts)
    return parse_program("\n".join(texts))


def random_facts(rng: random.Random, preds, size, domain=5, prefix="c"):
    out = set()
    preds = sorted(preds)
    tries = 0
    while len(out) < size and tries < size * 20:
        tries += 1
        p = rng.choice(preds)
        out.add(fact(p, *(f"{prefix}{rng.randrange(domain)}" for _ in range(BASE_PREDS.get(p, 2)))))
    return out


def body_predicates(program):
    return {a.pred for r in program for a in r.body}


# -- brute-force hypertree width ---------------------------------------------

def _prufer_trees(k):
    """Every labelled tree on ``k`` nodes as a parent map rooted at 0."""
    if k == 1:
        yield {0: None}
        return
    if k == 2:
        yield {0: None, 1: 0}
        return
    for seq in itertools.product(range(k), repeat=k - 2):
        degree = [1] * k
        for x in seq:
            degree[x] += 1
        edges = []
        seq = list(seq)
        for x in seq:
            leaf = min(i for i in range(k) if degree[i] == 1)
            edges.append((leaf, x))
            degree[leaf] -= 1
            degree[x] -= 1
        u, w = [i for i in range(k) if degree[i] == 1]
        edges.append((u, w))
        adj = {i: [] for i in range(k)}
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        parent = {0: None}
        stack = [0]
        while stack:
            p = stack.pop()
            for q in adj[p]:
                if q not in parent:
                    parent[q] = p
                    stack.append(q)
        yield parent


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def brute_width(rule):
    """Smallest width over all partitions and all labelled trees, chi = var(lambda)."""
    best = len(rule.body)
    for blocks in _set_partitions(list(range(len(rule.body)))):
        w = max(len(b) for b in blocks)
        if w >= best:
            continue
        chis = []
        for b in blocks:
            vs = []
            for i in b:
                for v in rule.body[i].variables():
                    if v not in vs:
                        vs.append(v)
            chis.append(tuple(vs))
        nodes = [DecompNode(i, chis[i], tuple(b)) for i, b in enumerate(blocks)]
        for parent in _prufer_trees(len(blocks)):
            if check_decomposition(rule, HypertreeDecomposition(rule, nodes, parent, 0)):
                best = w
                break
    return best


def names(facts, symbols=None):
    symbols = symbols or SYMBOLS
    return {(f.pred,) + tuple(symbols.name(a) for a in f.args) for f in facts}


# -- a fixed corpus of rule shapes --------------------------------------------

CORPUS_TEXT = """
T(?x,?y) :- E(?x,?y).
T(?x,?z) :- E(?x,?y), T(?y,?z).
T(?x,?z) :- T(?x,?y), T(?y,?z).
R(?x) :- E(?x,?y), E(?y,?z), E(?z,?x).
PC(?x,?y) :- CW(?x,?z1), CA(?x,?z2), PC(?z1,?y), PC(?z2,?y).
Q(?x,?w) :- E(?x,?y), E(?y,?z), E(?z,?w), E(?w,?x).
Q(?a,?e) :- E(?a,?b), E(?b,?c), E(?c,?d), E(?d,?e), E(?e,?a).
S(?x) :- E(?x,?y), F(?x,?z), G(?x,?w).
S(?y) :- E(?x,?y), F(?y,?z), G(?z,?w), H(?w,?v).
SA(?p1,?p2) :- HA(?o,?p1), AD(?p1,?ad), HA(?o,?p2), AD(?p2,?ad).
K(?x,?y,?z) :- E(?x,?y), E(?y,?z), E(?x,?z).
K4(?a) :- E(?a,?b), E(?a,?c), E(?a,?d), E(?b,?c), E(?b,?d), E(?c,?d).
B(?x,?y) :- E(?x,?y), F(?x,?y).
M(?x,?z) :- A3(?x,?y,?z), E(?x,?y), F(?y,?z).
N(?x) :- A3(?x,?y,?z), E(?y,?w), F(?z,?w).
L(?x) :- E(?x,?x).
C(?x) :- E(?x,a), F(a,?x).
P(?x,?y) :- E(?x,?u), F(?u,?v), G(?v,?y), E(?y,?t), F(?t,?s), G(?s,?x).
W(?x,?y) :- E(?x,?y), U1(?x), U2(?y), E(?y,?x).
D(?x,?y) :- A3(?x,?y,?z), A3(?y,?z,?x).
Z(?x) :- E(?x,?y), E(?y,?z), E(?z,?w), E(?w,?v), E(?v,?u), E(?u,?x), E(?x,?z).
Y(?x,?y) :- E(?x,?a), E(?a,?y), F(?x,?b), F(?b,?y).
X(?u) :- E(?u,?v), E(?v,?w), F(?w,?u), F(?u,?t), G(?t,?w).
V(?a,?b) :- E(?a,?b), E(?b,?c), F(?c,?d), F(?d,?a), G(?a,?c), G(?b,?d).
J(?x) :- U1(?x), U2(?x), U3(?x).
G2(?x,?y) :- G(?x,?y), G(?y,?x), G(?x,?x).
H2(?x,?y) :- A3(?x,?y,?z), A3(?z,?x,?y), A3(?y,?z,?x).
eval(?n,?s,?v) :- node(?n,?o,?l,?r), isAdd(?o), eval(?l,?s,?a), sum(?a,?b,?v), eval(?r,?s,?b), inExpr(?n,?e), valueSet(?e,?s), num(?a), num(?b).
O(?x,?y) :- E(?x,?m), F(?m,?y), G(?y,?n), H(?n,?x), E(?m,?n).
I2(?x) :- E(?x,?y), F(?y,?z), E(?z,?x), F(?x,?w), E(?w,?y).
"""


def corpus():
    return parse_program(CORPUS_TEXT)


# -- driving the decomposition-based functions directly ------------------------

def primed(rule, facts, hd=None, reducer=True):
    """A node store and per-rule count table brought up to date with ``facts``."""
    from collections import Counter

    from hdlog.core import FactStore
    from hdlog.decomp import RelationStats, decompose
    from hdlog.hdeval import NodeStore, hd_add

    store = FactStore(facts)
    if hd is None:
        preds = {a.pred: len(a.args) for a in rule.body}
        stats = RelationStats.from_facts(facts)
        for p, k in preds.items():
            stats.table.setdefault(p, (1, (1,) * k))
        hd = decompose(rule, stats)
    ns = NodeStore(hd)
    ns.reducer = reducer
    counts = Counter()
    hd_add(rule, store, FactStore(facts), ns, None, counts)
    return store, ns, counts


def contract_case(rng, rule, max_facts=60):
    """Random store plus disjoint Δ⁺ (absent) and Δ⁻ (present) sets for ``rule``."""
    preds = {a.pred for a in rule.body} | {rule.head.pred}
    pool = random_facts(rng, preds, rng.randint(5, max_facts), domain=rng.randint(3, 6))
    pool = sorted(pool)
    rng.shuffle(pool)
    cut = rng.randint(0, len(pool))
    base, extra = set(pool[:cut]), set(pool[cut:])
    if rng.random() < 0.5:
        heads = sorted(apply_rule(rule, base) - base)
        room = max(0, max_facts - len(base) - len(extra))
        base |= set(rng.sample(heads, min(room, len(heads))))
    extra -= base
    plus = set(rng.sample(sorted(extra), min(len(extra), rng.randint(1, 8)))) if extra else set()
    minus = set(rng.sample(sorted(base), min(len(base), rng.randint(1, 8)))) if base else set()
    return base, plus, minus


def names_tuples(tuples, symbols=None):
    symbols = symbols or SYMBOLS
    return {tuple(symbols.name(a) for a in t) for t in tuples}
