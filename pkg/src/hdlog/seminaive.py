"""Plan-based (left-to-right) evaluation: the seminaive loop and the
standard Del/Red/Add functions used for simple rules inside DRed."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .core import (DELTA, OLD, Atom, BodyPlan, FactStore, Minus, Program, Rule, Tagged,
                   Whole, as_store, delta_instances, instantiate, rule_plan)


@dataclass
class RoundStats:
    rounds: int = 0
    substitutions_considered: int = 0
    facts_derived: int = 0
    per_round: list = field(default_factory=list)

    # matching code bumps ``substitutions``
    @property
    def substitutions(self):
        return self.substitutions_considered

    @substitutions.setter
    def substitutions(self, value):
        self.substitutions_considered = value

    def end_round(self, derived: int, before: int):
        self.rounds += 1
        self.facts_derived += derived
        self.per_round.append(self.substitutions_considered - before)

    def as_lines(self) -> str:
        return (f"rounds={self.rounds}\n"
                f"substitutions_considered={self.substitutions_considered}\n"
                f"facts_derived={self.facts_derived}\n")


def _regions(store: FactStore, delta):
    delta = as_store(delta)
    return Whole(store), Whole(delta), Minus(store, delta)


def rule_delta(rule: Rule, store: FactStore, delta, counter=None,
               counts: Counter | None = None, sign: int = 1) -> set:
    """``r[I ∸ Δ]``; optionally adds ``sign`` per instance to ``counts``."""
    full, dl, rest = _regions(store, delta)
    plan = rule_plan(rule)
    heads = set()
    for s in delta_instances(rule, full, dl, rest, counter):
        h = instantiate(rule.head, plan.slot, s)
        heads.add(h)
        if counts is not None:
            counts[h] += sign
    return heads


def delta_apply(program: Program, store, delta, counter=None) -> set:
    """``Π[I ∸ Δ]`` via n+1 labelled evaluations per rule."""
    store = as_store(store)
    delta = as_store(delta)
    out = set()
    for r in program:
        out |= rule_delta(r, store, delta, counter)
    return out


def mat(program: Program, explicit, stats: RoundStats | None = None) -> FactStore:
    """Seminaive materialisation.  Δ lives in the store's DELTA partition."""
    stats = stats if stats is not None else RoundStats()
    store = FactStore()
    store.update(explicit, DELTA)
    plans = [rule_plan(r) for r in program]
    while store._ndelta:
        before = stats.substitutions_considered
        full, dl, rest = Whole(store), Tagged(store, DELTA), Tagged(store, OLD)
        derived = set()
        for r, plan in zip(program, plans):
            for s in delta_instances(r, full, dl, rest, stats):
                h = instantiate(r.head, plan.slot, s)
                if h not in store:
                    derived.add(h)
        store.promote_all()
        store.update(derived, DELTA)
        stats.end_round(len(derived), before)
    return store


def std_add(rule: Rule, store: FactStore, delta_plus, counter=None, counts=None) -> set:
    """``r[I ∸ Δ⁺] \\ I``; Δ⁺ must already be in the store."""
    return {h for h in rule_delta(rule, store, delta_plus, counter, counts, +1) if h not in store}


def std_del(rule: Rule, store: FactStore, delta_minus, counter=None, counts=None) -> set:
    """``r[I ∸ Δ⁻] ∩ (I \\ Δ⁻)``."""
    delta_minus = as_store(delta_minus)
    return {h for h in rule_delta(rule, store, delta_minus, counter, counts, -1)
            if h in store and h not in delta_minus}


_head_plans: dict = {}


def _head_bound_plan(rule: Rule) -> BodyPlan:
    plan = _head_plans.get(rule)
    if plan is None:
        plan = _head_plans[rule] = BodyPlan(rule.body, rule.variables, rule.head_variables())
    return plan


def std_red(rule: Rule, store: FactStore, delta, counter=None) -> set:
    """``r[I] ∩ Δ``: each candidate is checked by a head-bound body query."""
    plan = _head_bound_plan(rule)
    full = [Whole(store)] * len(rule.body)
    head = rule.head
    out = set()
    if isinstance(delta, FactStore):
        candidates = (Atom(head.pred, a) for a in delta.relation(head.pred))
    else:
        candidates = (f for f in delta if f.pred == head.pred)
    for f in candidates:
        env = [None] * len(plan.variables)
        ok = True
        for a, c in zip(head.args, f.args):
            if isinstance(a, int):
                ok = a == c
            else:
                s = plan.slot[a]
                ok = env[s] is None or env[s] == c
                env[s] = c
            if not ok:
                break
        if ok and next(plan.run(full, counter, env), None) is not None:
            out.add(f)
    return out
