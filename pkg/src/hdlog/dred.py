"""Delete/Rederive maintenance with per-rule dispatch to the standard or
the decomposition-based Del/Red/Add functions."""
from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .core import FactStore, Program, Rule, Whole, instantiate, rule_plan
from .decomp import HypertreeDecomposition, RelationStats, decompose, is_complex
from .hdeval import NodeStore, hd_add, hd_del, hd_red
from .seminaive import RoundStats, std_add, std_del, std_red

STANDARD = "standard"
HD = "hd"
MODES = ("standard", "hd", "combined")


class InvariantViolation(AssertionError):
    pass


class DerivationCountTable:
    """Per-rule counts of currently valid derivations, plus the explicit-fact flag.

    For standard rules a derivation is a rule instance; for decomposed rules
    it is a distinct joint tuple of node instantiations (the same thing when
    every chi(p) equals var(lambda(p))).  Node-tuple counts live with the
    node stores.
    """

    def __init__(self):
        self.by_rule: dict[str, Counter] = {}
        self.explicit: set = set()

    def for_rule(self, rule_id: str) -> Counter:
        return self.by_rule.setdefault(rule_id, Counter())

    def count(self, f) -> int:
        return sum(c.get(f, 0) for c in self.by_rule.values())

    def normalise(self):
        for rid in self.by_rule:
            self.by_rule[rid] = +self.by_rule[rid]


def oracle_check(f, counts) -> bool:
    """True iff ``f`` still has a one-step derivation (count above zero)."""
    if isinstance(counts, DerivationCountTable):
        return counts.count(f) > 0
    return counts.get(f, 0) > 0


@dataclass
class UpdateRequest:
    add: set = field(default_factory=set)
    delete: set = field(default_factory=set)


@dataclass
class UpdateReport:
    overdeleted: int = 0
    rederived: int = 0
    added: int = 0
    rounds: int = 0
    substitutions_considered: int = 0
    round_substitutions: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def as_lines(self) -> str:
        lines = [f"overdeleted={self.overdeleted}", f"rederived={self.rederived}",
                 f"added={self.added}", f"rounds={self.rounds}",
                 f"substitutions_considered={self.substitutions_considered}"]
        lines += [f"time_{k}={v:.6f}" for k, v in self.timings.items()]
        return "\n".join(lines) + "\n"


def partition_program(program: Program, stats: RelationStats | None = None,
                      mode: str = "combined") -> dict[str, str]:
    """Rule id -> ``standard`` or ``hd``; complex rules go to ``hd`` in combined mode."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == STANDARD:
        return {r.id: STANDARD for r in program}
    if mode == HD:
        return {r.id: HD for r in program}
    return {r.id: HD if is_complex(r, stats) else STANDARD for r in program}


class MaterialisationState:
    """Explicit facts, their materialisation, derivation counts and node stores."""

    def __init__(self, program: Program, mode: str = "combined", reducer: bool = True,
                 decompositions: dict[str, HypertreeDecomposition] | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.program = program
        self.mode = mode
        self.reducer = reducer
        self.explicit: set = set()
        self.store = FactStore()
        self.counts = DerivationCountTable()
        self.assignment: dict[str, str] | None = None
        self.node_stores: dict[str, NodeStore] = {}
        self.relation_stats: RelationStats | None = None
        self._given = decompositions or {}
        self.last_report: UpdateReport | None = None

    # decompositions are fixed from the first explicit data seen
    def prepare(self, facts: Iterable):
        self.relation_stats = RelationStats.from_facts(facts, self.program)
        self.assignment = partition_program(self.program, self.relation_stats, self.mode)
        for r in self.program:
            if self.assignment[r.id] == HD:
                hd = self._given.get(r.id) or decompose(r, self.relation_stats)
                ns = NodeStore(hd)
                ns.reducer = self.reducer
                self.node_stores[r.id] = ns

    @property
    def facts(self) -> set:
        return self.store.facts()

    def _del(self, r: Rule, dstore, counter):
        counts = self.counts.for_rule(r.id)
        if self.assignment[r.id] == HD:
            return hd_del(r, self.store, dstore, self.node_stores[r.id], counter, counts)
        return std_del(r, self.store, dstore, counter, counts)

    def _red(self, r: Rule, dstore, counter):
        if self.assignment[r.id] == HD:
            return hd_red(r, self.store, dstore, self.node_stores[r.id], self.counts.for_rule(r.id), counter)
        return std_red(r, self.store, dstore, counter)

    def _add(self, r: Rule, dstore, counter):
        counts = self.counts.for_rule(r.id)
        if self.assignment[r.id] == HD:
            return hd_add(r, self.store, dstore, self.node_stores[r.id], counter, counts)
        return std_add(r, self.store, dstore, counter, counts)

    def check(self) -> list[str]:
        """Compare incremental state against recomputation over the current store."""
        problems = []
        if not self.explicit <= self.store.facts():
            problems.append("explicit facts missing from the materialisation")
        fresh = recount(self)
        for r in self.program:
            if +self.counts.for_rule(r.id) != fresh[r.id]:
                problems.append(f"derivation counts of rule {r.id} differ from a recount")
        total = Counter()
        for c in fresh.values():
            total.update(c)
        for f in self.store:
            if total[f] <= 0 and f not in self.explicit:
                problems.append(f"fact {f} has neither a derivation nor the explicit flag")
                break
        for rid, ns in self.node_stores.items():
            problems += [f"rule {rid}: {p}" for p in ns.check_invariant(self.store)]
        return problems


def recount(state: MaterialisationState) -> dict[str, Counter]:
    """From-scratch derivation counts for every rule over the current store."""
    out = {}
    full = Whole(state.store)
    for r in state.program:
        plan = rule_plan(r)
        ns = state.node_stores.get(r.id) if state.assignment else None
        c: Counter = Counter()
        if ns is None:
            for s in plan.run([full] * len(r.body)):
                c[instantiate(r.head, plan.slot, s)] += 1
        else:
            projs = [tuple(plan.slot[v] for v in ns.chi[p]) for p in ns.order]
            seen = set()
            for s in plan.run([full] * len(r.body)):
                joint = tuple(tuple(s[i] for i in pr) for pr in projs)
                if joint not in seen:
                    seen.add(joint)
                    c[instantiate(r.head, plan.slot, s)] += 1
        out[r.id] = c
    return out


def dred_update(state: MaterialisationState, req: UpdateRequest,
                stats: RoundStats | None = None) -> MaterialisationState:
    """One DRed run: overdelete, rederive, add; mutates and returns ``state``."""
    stats = stats if stats is not None else RoundStats()
    report = UpdateReport()
    t0 = time.perf_counter()
    e_minus = (set(req.delete) & state.explicit) - set(req.add)
    e_plus = set(req.add) - state.explicit
    if state.assignment is None:
        state.prepare(state.explicit | e_plus)
    program, store = state.program, state.store
    before = stats.substitutions_considered

    # overdelete
    deleted: set = set()
    pending = set(e_minus)
    while True:
        dm = pending - deleted
        if not dm:
            break
        dstore = FactStore(dm)
        pending = set()
        for r in program:
            pending |= state._del(r, dstore, stats)
        deleted |= dm
        for f in dm:
            store.discard(f)
    t1 = time.perf_counter()

    # rederive
    dstore = FactStore(deleted)
    delta: set = set()
    if deleted:
        for r in program:
            delta |= state._red(r, dstore, stats)
    delta |= (state.explicit - e_minus) & deleted
    t2 = time.perf_counter()

    # add
    pending = {f for f in delta | e_plus if f not in store}
    added: set = set()
    while True:
        dp = {f for f in pending if f not in store}
        if not dp:
            break
        round_start = stats.substitutions_considered
        added |= dp
        store.update(dp)
        dpstore = FactStore(dp)
        pending = set()
        for r in program:
            pending |= state._add(r, dpstore, stats)
        stats.end_round(len(dp), round_start)
        report.round_substitutions.append(stats.substitutions_considered - round_start)
    t3 = time.perf_counter()

    state.explicit = (state.explicit - e_minus) | e_plus
    state.counts.explicit = set(state.explicit)
    state.counts.normalise()

    report.overdeleted = len(deleted)
    report.rederived = len(delta & deleted)
    report.added = len(added)
    report.rounds = len(report.round_substitutions)
    report.substitutions_considered = stats.substitutions_considered - before
    report.timings = {"overdelete": t1 - t0, "rederive": t2 - t1, "add": t3 - t2}
    state.last_report = report
    return state


def materialise(program: Program, explicit, mode: str = "combined", reducer: bool = True,
                stats: RoundStats | None = None) -> MaterialisationState:
    """Initial materialisation: DRed from the empty state with E⁺ = explicit."""
    state = MaterialisationState(program, mode, reducer)
    return dred_update(state, UpdateRequest(add=set(explicit)), stats)
