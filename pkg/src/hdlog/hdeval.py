"""Rule evaluation over a hypertree decomposition with per-node join results
kept between DRed runs.

Every node ``p`` holds ``inst_i`` (the in-node join of its atoms under the
current materialisation, projected to chi(p)) plus the transient sets
``inst_plus``, ``inst_minus``, ``inst_ac`` and ``inst_re``.  ``counts`` keeps,
per chi-tuple, how many in-node matches support it.

Fact-level derivation counts passed to these functions count distinct joint
node tuples per head fact; the cross-node join carries those multiplicities
instead of enumerating joint tuples one by one.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from typing import Callable

from .core import (SYMBOLS, Atom, BodyPlan, FactStore, Minus, Region, Rule, Whole,
                   as_store, constant_text, labeled_regions)
from .decomp import HypertreeDecomposition

# labels
I = "I"
PLUS = "Δ+"
I_PLUS = "I∪Δ+"
MINUS = "Δ-"
I_MINUS = "I\\Δ-"


def label_plus(pivot_pos: int, pos: int) -> str:
    if pos < pivot_pos:
        return I_PLUS
    return PLUS if pos == pivot_pos else I


def label_minus(pivot_pos: int, pos: int) -> str:
    if pos < pivot_pos:
        return I
    return MINUS if pos == pivot_pos else I_MINUS


class NodeState:
    """Kept and transient sets of one node.

    ``inst_ac`` is held as a label until something needs its tuples, so a
    semijoin against a small source can probe the per-neighbour indexes of
    ``inst_i`` instead of scanning it.
    """

    __slots__ = ("inst_i", "inst_plus", "inst_minus", "inst_re", "counts",
                 "label", "_ac", "index", "key_pos")

    def __init__(self, key_pos=None):
        self.inst_i: set = set()
        self.inst_plus: set = set()
        self.inst_minus: set = set()
        self.inst_re: set = set()
        self.counts: Counter = Counter()
        self.label: str | None = None
        self._ac: set | None = set()
        # neighbour -> positions of the shared chi variables, and key -> tuples
        self.key_pos: dict = dict(key_pos or {})
        self.index: dict = {nb: defaultdict(set) for nb in self.key_pos}

    @property
    def inst_ac(self) -> set:
        if self._ac is None:
            self._ac = _materialise(self, self.label)
        return self._ac

    @inst_ac.setter
    def inst_ac(self, tuples):
        self._ac = set(tuples)
        self.label = None

    def active_size(self) -> int:
        if self._ac is not None:
            return len(self._ac)
        if self.label == I:
            return len(self.inst_i)
        if self.label == I_PLUS:
            return len(self.inst_i) + len(self.inst_plus)
        return len(self.inst_i)

    def grow(self, tuples):
        for t in tuples:
            if t not in self.inst_i:
                self.inst_i.add(t)
                for nb, pos in self.key_pos.items():
                    self.index[nb][tuple(t[i] for i in pos)].add(t)

    def shrink(self, tuples):
        for t in tuples:
            if t in self.inst_i:
                self.inst_i.discard(t)
                for nb, pos in self.key_pos.items():
                    k = tuple(t[i] for i in pos)
                    bucket = self.index[nb][k]
                    bucket.discard(t)
                    if not bucket:
                        del self.index[nb][k]


def _materialise(st: NodeState, label) -> set:
    if label is None:
        return set()
    if label == I:
        return set(st.inst_i)
    if label == PLUS:
        return set(st.inst_plus)
    if label == I_PLUS:
        return st.inst_i | st.inst_plus
    if label == MINUS:
        return set(st.inst_minus)
    if label == I_MINUS:
        return st.inst_i - st.inst_minus
    raise ValueError(label)


def delta_first_order(atoms, first: int) -> list[int]:
    """Atom order for an in-node evaluation seeded by atom ``first``.

    Each next atom is the one sharing most variables with those already
    placed (fewest new variables on ties, then lowest index).
    """
    order = [first]
    bound = set(atoms[first].variables())
    left = [j for j in range(len(atoms)) if j != first]
    while left:
        def score(j):
            vs = set(atoms[j].variables())
            return (-len(vs & bound), len(vs - bound), j)
        j = min(left, key=score)
        left.remove(j)
        order.append(j)
        bound |= set(atoms[j].variables())
    return order


class NodeStore:
    """Per-node instantiation sets for one rule and its decomposition."""

    def __init__(self, hd: HypertreeDecomposition):
        self.hd = hd
        self.rule: Rule = hd.rule
        self.order = [p.id for p in hd.nodes]
        covered = {i for p in hd.nodes for i in p.lam}
        if covered != set(range(len(self.rule.body))):
            raise ValueError(f"decomposition of {self.rule.id} leaves body atoms out of every lambda")
        self.chi = {p.id: p.chi for p in hd.nodes}
        self._plans = {}
        self._proj = {}
        for p in hd.nodes:
            atoms = hd.atoms(p.id)
            lam_vars = []
            for a in atoms:
                for v in a.variables():
                    if v not in lam_vars:
                        lam_vars.append(v)
            plan = BodyPlan(atoms, lam_vars)
            self._plans[p.id] = plan
            self._proj[p.id] = tuple(plan.slot[v] for v in p.chi)
        self.state = {}
        for p in hd.nodes:
            key_pos = {}
            for nb in hd.neighbours(p.id):
                shared = [v for v in p.chi if v in self.chi[nb]]
                key_pos[nb] = tuple(p.chi.index(v) for v in shared)
            self.state[p.id] = NodeState(key_pos)
        # one plan per (node, seed atom), sharing the variable slots of _plans
        self._seeded = {}
        for p in hd.nodes:
            plan = self._plans[p.id]
            for i in range(len(plan.atoms)):
                order = delta_first_order(plan.atoms, i)
                seeded = BodyPlan([plan.atoms[j] for j in order], plan.variables)
                self._seeded[p.id, i] = (order, seeded)
        self.head_vars = set(self.rule.head_variables())
        self.reducer = True
        self.observer: Callable | None = None

    def __getitem__(self, node_id) -> NodeState:
        return self.state[node_id]

    def notify(self, event: str):
        if self.observer is not None:
            self.observer(event, self)

    def dump(self, names=("inst_i", "inst_plus", "inst_minus", "inst_ac", "inst_re"), symbols=None) -> str:
        symbols = symbols or SYMBOLS
        lines = []
        for p in self.order:
            for name in names:
                tuples = sorted(tuple(symbols.name(c) for c in t) for t in getattr(self.state[p], name))
                body = ";".join("(" + ",".join(constant_text(c) for c in t) + ")" for t in tuples)
                lines.append(f"inst {self.rule.id} {p} {name} {{{body}}}")
        return "\n".join(lines) + "\n"

    def full_join(self, node_id, store: FactStore) -> Counter:
        """Brute in-node join of lambda(p) over the whole store."""
        plan = self._plans[node_id]
        proj = self._proj[node_id]
        full = Whole(store)
        return Counter(tuple(s[i] for i in proj) for s in plan.run([full] * len(plan.atoms)))

    def check_invariant(self, store: FactStore) -> list[str]:
        """Differences between the kept sets and a recomputation over ``store``."""
        problems = []
        for p in self.order:
            st = self.state[p]
            fresh = self.full_join(p, store)
            if st.inst_i != set(fresh):
                problems.append(f"node {p}: inst_i differs from the in-node join")
            if +st.counts != fresh:
                problems.append(f"node {p}: tuple counts differ from the in-node join")
            for name in ("inst_plus", "inst_minus", "inst_re"):
                if getattr(st, name):
                    problems.append(f"node {p}: {name} not empty")
            if any(len(t) != len(self.chi[p]) for t in st.inst_i):
                problems.append(f"node {p}: tuple arity mismatch")
        return problems


def pi_p_counted(ns: NodeStore, node_id, full: Region, delta: Region, rest: Region,
                 counter=None) -> Counter:
    """chi-tuples of matches of lambda(p) inside I that meet Δ, with match counts."""
    plan = ns._plans[node_id]
    proj = ns._proj[node_id]
    n = len(plan.atoms)
    out: Counter = Counter()
    for i in range(n):
        if not delta.has(plan.atoms[i].pred):
            continue
        order, seeded = ns._seeded[node_id, i]
        regions = labeled_regions(n, i, full, delta, rest)
        for s in seeded.run([regions[j] for j in order], counter):
            out[tuple(s[j] for j in proj)] += 1
    return out


def pi_p(ns: NodeStore, node_id, store, delta, counter=None) -> set:
    store = as_store(store)
    delta = as_store(delta)
    return set(pi_p_counted(ns, node_id, Whole(store), Whole(delta), Minus(store, delta), counter))


def set_active(st: NodeState, label: str):
    if label not in (I, PLUS, I_PLUS, MINUS, I_MINUS):
        raise ValueError(label)
    st.label = label
    st._ac = None


def _positions(schema, shared):
    return tuple(schema.index(v) for v in shared)


def semijoin(ns: NodeStore, target, source, counter=None):
    """inst_ac(target) := inst_ac(target) ⋉ inst_ac(source) on shared chi variables."""
    tchi, schi = ns.chi[target], ns.chi[source]
    shared = [v for v in tchi if v in schi]
    tst, sst = ns.state[target], ns.state[source]
    if not shared:
        if counter is not None:
            counter.substitutions += 1
        if not sst.inst_ac:
            tst.inst_ac = set()
        return
    sp = _positions(schi, shared)
    keys = {tuple(t[i] for i in sp) for t in sst.inst_ac}
    lazy = tst._ac is None and tst.label in (I, I_PLUS, I_MINUS) and source in tst.index
    if lazy and len(keys) < tst.active_size():
        # probe the index of inst_i with the source keys
        index = tst.index[source]
        found: set = set()
        for k in keys:
            bucket = index.get(k)
            if bucket:
                found |= bucket
        tp = tst.key_pos[source]
        if tst.label == I_PLUS:
            found |= {t for t in tst.inst_plus if tuple(t[i] for i in tp) in keys}
        elif tst.label == I_MINUS:
            found -= tst.inst_minus
        if counter is not None:
            counter.substitutions += len(keys) + len(found)
        tst.inst_ac = found
        return
    active = tst.inst_ac
    if counter is not None:
        counter.substitutions += len(active)
    tp = _positions(tchi, shared)
    tst.inst_ac = {t for t in active if tuple(t[i] for i in tp) in keys}


def top_down_lsj(ns: NodeStore, root, counter=None):
    for node, came_from in ns.hd.bfs(root)[1:]:
        semijoin(ns, node, came_from, counter)


def bottom_up_lsj(ns: NodeStore, root, counter=None):
    for node, came_from in reversed(ns.hd.bfs(root)[1:]):
        semijoin(ns, came_from, node, counter)


def cross_node_join(ns: NodeStore, root=None, counter=None) -> Counter:
    """Bottom-up join of active sets; head-variable tuples with joint-tuple counts.

    Keys follow ``ns.rule.head_variables()`` order.
    """
    hd = ns.hd
    root = hd.root if root is None else root
    schema, rel = _join_subtree(ns, root, None, counter)
    if not rel:
        return Counter()
    hv = ns.rule.head_variables()
    pos = [schema.index(v) for v in hv]
    out: Counter = Counter()
    for t, w in rel.items():
        out[tuple(t[i] for i in pos)] += w
    return out


def _join_subtree(ns: NodeStore, node, came_from, counter):
    chi = ns.chi[node]
    schema = list(chi)
    rel: dict = dict.fromkeys(ns.state[node].inst_ac, 1)
    keep_vars = set(chi) | ns.head_vars
    for child in sorted(ns.hd.neighbours(node)):
        if child == came_from or not rel:
            continue
        cschema, crel = _join_subtree(ns, child, node, counter)
        shared = [v for v in schema if v in cschema]
        extra = [v for v in cschema if v not in schema]
        sp = _positions(schema, shared)
        cp = _positions(cschema, shared)
        ep = _positions(cschema, extra)
        index = defaultdict(list)
        for u, w in crel.items():
            index[tuple(u[i] for i in cp)].append((tuple(u[i] for i in ep), w))
        combined_schema = schema + extra
        keep = [i for i, v in enumerate(combined_schema) if v in keep_vars]
        out: dict = {}
        probes = 0
        for t, w in rel.items():
            matches = index.get(tuple(t[i] for i in sp))
            probes += 1
            if not matches:
                continue
            probes += len(matches)
            for ext, w2 in matches:
                full = t + ext
                key = tuple(full[i] for i in keep)
                out[key] = out.get(key, 0) + w * w2
        if counter is not None:
            counter.substitutions += probes + len(crel)
        schema = [combined_schema[i] for i in keep]
        rel = out
    return schema, rel


def cross_node_evaluation(ns: NodeStore, label_fn, counter=None) -> Counter:
    """Union over pivots of the projected cross-node join; head facts with counts."""
    hd = ns.hd
    rule = ns.rule
    heads: Counter = Counter()
    hv = rule.head_variables()
    for i, pivot in enumerate(ns.order):
        for j, p in enumerate(ns.order):
            set_active(ns.state[p], label_fn(i, j))
        if not ns.state[pivot].inst_ac:
            continue
        if ns.reducer:
            biggest = max(ns.state[p].active_size() for p in ns.order)
            if len(ns.state[pivot].inst_ac) * 3 < biggest:
                top_down_lsj(ns, pivot, counter)
            bottom_up_lsj(ns, hd.root, counter)
            top_down_lsj(ns, hd.root, counter)
        for vals, w in cross_node_join(ns, hd.root, counter).items():
            env = dict(zip(hv, vals))
            heads[Atom(rule.head.pred, tuple(env.get(a, a) for a in rule.head.args))] += w
    for p in ns.order:
        ns.state[p].inst_ac = set()
    return heads


def _regions(store: FactStore, delta):
    delta = as_store(delta)
    return Whole(store), Whole(delta), Minus(store, delta), delta


def hd_add(rule: Rule, store: FactStore, delta_plus, ns: NodeStore, counter=None,
           counts: Counter | None = None) -> set:
    """``r[I ∸ Δ⁺] \\ I`` with Δ⁺ already merged into ``store``."""
    full, dl, rest, _ = _regions(store, delta_plus)
    for p in ns.order:
        st = ns.state[p]
        found = pi_p_counted(ns, p, full, dl, rest, counter)
        st.counts.update(found)
        st.inst_plus = set(found) - st.inst_i
    ns.notify("add")
    derived = cross_node_evaluation(ns, label_plus, counter)
    if counts is not None:
        counts.update(derived)
    for p in ns.order:
        st = ns.state[p]
        st.grow(st.inst_plus)
        st.inst_plus = set()
    return {h for h in derived if h not in store}


def hd_del(rule: Rule, store: FactStore, delta_minus, ns: NodeStore, counter=None,
           counts: Counter | None = None) -> set:
    """``r[I ∸ Δ⁻] ∩ (I \\ Δ⁻)``; Δ⁻ is still in ``store``."""
    full, dl, rest, dstore = _regions(store, delta_minus)
    for p in ns.order:
        st = ns.state[p]
        found = pi_p_counted(ns, p, full, dl, rest, counter)
        st.counts.subtract(found)
        for t in found:
            if st.counts[t] <= 0:
                del st.counts[t]
        st.inst_minus = set(found) & st.inst_i
        st.inst_re |= st.inst_minus
    ns.notify("del")
    derived = cross_node_evaluation(ns, label_minus, counter)
    if counts is not None:
        counts.subtract(derived)
    for p in ns.order:
        st = ns.state[p]
        st.shrink(st.inst_minus)
        st.inst_minus = set()
    return {h for h in derived if h in store and h not in dstore}


def hd_red(rule: Rule, store: FactStore, delta, ns: NodeStore, counts: Counter,
           counter=None) -> set:
    """``r[I] ∩ Δ`` over the post-overdeletion store.

    The tuple oracle reads ``NodeState.counts``; the fact oracle reads this
    rule's entry of the derivation-count table.
    """
    delta = as_store(delta)
    for p in ns.order:
        st = ns.state[p]
        st.inst_plus = {t for t in st.inst_re if st.counts.get(t, 0) > 0}
    ns.notify("red")
    derived = cross_node_evaluation(ns, label_plus, counter)
    counts.update(derived)
    rederived = {h for h in derived if h in delta}
    for p in ns.order:
        st = ns.state[p]
        st.grow(st.inst_plus)
        st.inst_re = set()
        st.inst_plus = set()
    head = rule.head.pred
    rederived |= {f for f in delta if f.pred == head and counts.get(f, 0) > 0}
    return rederived
