"""Datalog data model, text formats, fact storage and body matching.

Constants are interned to dense integer ids on load; every join below works
on those ids.  Variables are :class:`Var` instances, so an atom argument is
either a ``Var`` or an ``int``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence


class DatalogError(Exception):
    """Base class for load-time errors."""


class DatalogSyntaxError(DatalogError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnsafeRuleError(DatalogError):
    def __init__(self, rule_text: str, variable: str):
        super().__init__(f"unsafe rule {rule_text}: variable {variable} unbound in body")
        self.variable = variable


class ArityError(DatalogError):
    def __init__(self, predicate: str, expected: int, found: int):
        super().__init__(f"arity conflict for {predicate}: {expected} vs {found}")
        self.predicate = predicate
        self.arities = (expected, found)


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self):
        return "?" + self.name


class Atom(NamedTuple):
    """``pred(args)``.  A fact is an atom whose args are all ints."""

    pred: str
    args: tuple

    def variables(self) -> list[Var]:
        seen = []
        for a in self.args:
            if isinstance(a, Var) and a not in seen:
                seen.append(a)
        return seen

    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)


Fact = Atom


class SymbolTable:
    """Bidirectional map between constant text and dense integer ids."""

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []

    def intern(self, text: str) -> int:
        i = self._ids.get(text)
        if i is None:
            i = len(self._names)
            self._ids[text] = i
            self._names.append(text)
        return i

    def name(self, i: int) -> str:
        return self._names[i]

    def lookup(self, text: str) -> int | None:
        return self._ids.get(text)

    def __len__(self):
        return len(self._names)


SYMBOLS = SymbolTable()


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Atom, ...]
    id: str = "r0"
    variables: tuple[Var, ...] = field(init=False, compare=False)

    def __post_init__(self):
        seen: list[Var] = []
        for atom in self.body:
            for v in atom.variables():
                if v not in seen:
                    seen.append(v)
        object.__setattr__(self, "variables", tuple(seen))
        for v in self.head.variables():
            if v not in seen:
                raise UnsafeRuleError(self.head.pred, str(v))

    def head_variables(self) -> list[Var]:
        return self.head.variables()


@dataclass
class Program:
    rules: list[Rule]

    def __post_init__(self):
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise DatalogError("duplicate rule ids")

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def rule(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)

    def arities(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rules:
            for a in (r.head, *r.body):
                _check_arity(out, a)
        return out

    def predicates(self) -> set[str]:
        return set(self.arities())


def _check_arity(arities: dict[str, int], atom: Atom):
    known = arities.setdefault(atom.pred, len(atom.args))
    if known != len(atom.args):
        raise ArityError(atom.pred, known, len(atom.args))


# -- text formats -----------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<implies>:-)
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<name>-?[A-Za-z0-9_]+)
  | (?P<punct>[(),.])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise DatalogSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            yield kind, m.group(), line, col
        pos = m.end()
    yield "eof", "", line, pos - line_start + 1


class _Parser:
    def __init__(self, text: str, symbols: SymbolTable):
        self.tokens = list(_tokenize(text))
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, line, col = self.next()
        if text != value or kind == "string":
            raise DatalogSyntaxError(f"expected {value!r}, found {text or 'end of input'!r}", line, col)

    def atom(self) -> Atom:
        kind, text, line, col = self.next()
        if kind != "name" or not (text[0].isalpha() or text[0] == "_"):
            raise DatalogSyntaxError(f"expected predicate name, found {text or 'end of input'!r}", line, col)
        pred = text
        args: list = []
        if self.peek()[1] == "(":
            self.next()
            if self.peek()[1] != ")":
                while True:
                    args.append(self.term())
                    if self.peek()[1] == ",":
                        self.next()
                        continue
                    break
            self.expect(")")
        return Atom(pred, tuple(args))

    def term(self):
        kind, text, line, col = self.next()
        if kind == "var":
            return Var(text[1:])
        if kind == "name":
            return self.symbols.intern(text)
        if kind == "string":
            return self.symbols.intern(_unquote(text))
        raise DatalogSyntaxError(f"expected term, found {text or 'end of input'!r}", line, col)

    def at_eof(self):
        return self.peek()[0] == "eof"


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


_BARE = re.compile(r"-?[A-Za-z0-9_]+\Z")


def constant_text(name: str) -> str:
    if _BARE.match(name):
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def parse_program(text: str, symbols: SymbolTable | None = None) -> Program:
    """Parse ``Head :- B0, ..., Bn.`` rules.  Rule ids are ``r0, r1, ...``."""
    symbols = symbols or SYMBOLS
    p = _Parser(text, symbols)
    rules: list[Rule] = []
    arities: dict[str, int] = {}
    while not p.at_eof():
        _, _, line, col = p.peek()
        head = p.atom()
        body: list[Atom] = []
        if p.peek()[0] == "implies":
            p.next()
            while True:
                body.append(p.atom())
                if p.peek()[1] == ",":
                    p.next()
                    continue
                break
        p.expect(".")
        if not body:
            raise DatalogSyntaxError("rule has no body (facts belong in a fact file)", line, col)
        for a in (head, *body):
            _check_arity(arities, a)
        text_form = format_rule_parts(head, body, symbols)
        try:
            rules.append(Rule(head, tuple(body), id=f"r{len(rules)}"))
        except UnsafeRuleError as e:
            raise UnsafeRuleError(text_form, e.variable) from None
    return Program(rules)


def parse_facts(text: str, symbols: SymbolTable | None = None,
                arities: dict[str, int] | None = None) -> set[Fact]:
    symbols = symbols or SYMBOLS
    arities = dict(arities or {})
    p = _Parser(text, symbols)
    facts: set[Fact] = set()
    while not p.at_eof():
        _, _, line, col = p.peek()
        atom = p.atom()
        p.expect(".")
        if not atom.is_ground():
            bad = next(a for a in atom.args if isinstance(a, Var))
            raise DatalogSyntaxError(f"variable {bad} in fact", line, col)
        _check_arity(arities, atom)
        facts.add(atom)
    return facts


def format_atom(atom: Atom, symbols: SymbolTable | None = None) -> str:
    symbols = symbols or SYMBOLS
    parts = [str(a) if isinstance(a, Var) else constant_text(symbols.name(a)) for a in atom.args]
    return f"{atom.pred}({','.join(parts)})"


def format_rule_parts(head, body, symbols=None) -> str:
    return f"{format_atom(head, symbols)} :- {', '.join(format_atom(b, symbols) for b in body)}."


def format_rule(rule: Rule, symbols: SymbolTable | None = None) -> str:
    return format_rule_parts(rule.head, rule.body, symbols)


def fact_sort_key(fact: Fact, symbols: SymbolTable | None = None):
    symbols = symbols or SYMBOLS
    return (fact.pred, tuple(symbols.name(c) for c in fact.args))


def dump_facts(facts: Iterable[Fact], symbols: SymbolTable | None = None) -> str:
    """One fact per line, ordered by predicate then constant text per position."""
    symbols = symbols or SYMBOLS
    ordered = sorted(facts, key=lambda f: fact_sort_key(f, symbols))
    return "".join(format_atom(f, symbols) + ".\n" for f in ordered)


def fact(pred: str, *names, symbols: SymbolTable | None = None) -> Fact:
    """Build a fact from constant text, interning as needed."""
    symbols = symbols or SYMBOLS
    return Atom(pred, tuple(symbols.intern(str(n)) for n in names))


# -- fact storage -----------------------------------------------------------

OLD = 0
DELTA = 1


class FactStore:
    """Predicate-indexed fact set; each fact carries an ``OLD``/``DELTA`` tag.

    Hash indexes on argument-position subsets are built on first use and kept
    up to date on every mutation.
    """

    def __init__(self, facts: Iterable[Fact] = (), tag: int = OLD):
        self._rel: dict[str, dict[tuple, int]] = {}
        self._idx: dict[str, dict[tuple, dict[tuple, set]]] = {}
        self._ndelta = 0
        for f in facts:
            self.add(f, tag)

    def __len__(self):
        return sum(len(r) for r in self._rel.values())

    def __contains__(self, f: Fact):
        rel = self._rel.get(f.pred)
        return rel is not None and f.args in rel

    def __iter__(self) -> Iterator[Fact]:
        for pred, rel in self._rel.items():
            for args in rel:
                yield Atom(pred, args)

    def add(self, f: Fact, tag: int = OLD) -> bool:
        rel = self._rel.setdefault(f.pred, {})
        if f.args in rel:
            return False
        rel[f.args] = tag
        if tag == DELTA:
            self._ndelta += 1
        for positions, index in self._idx.get(f.pred, {}).items():
            key = tuple(f.args[i] for i in positions)
            index.setdefault(key, set()).add(f.args)
        return True

    def update(self, facts: Iterable[Fact], tag: int = OLD):
        for f in facts:
            self.add(f, tag)

    def discard(self, f: Fact) -> bool:
        rel = self._rel.get(f.pred)
        if rel is None or f.args not in rel:
            return False
        if rel.pop(f.args) == DELTA:
            self._ndelta -= 1
        for positions, index in self._idx.get(f.pred, {}).items():
            key = tuple(f.args[i] for i in positions)
            bucket = index[key]
            bucket.discard(f.args)
            if not bucket:
                del index[key]
        return True

    def tag(self, f: Fact) -> int | None:
        rel = self._rel.get(f.pred)
        return None if rel is None else rel.get(f.args)

    def retag(self, f: Fact, tag: int):
        rel = self._rel[f.pred]
        old = rel[f.args]
        if old != tag:
            rel[f.args] = tag
            self._ndelta += 1 if tag == DELTA else -1

    def promote_all(self):
        """Retag every DELTA fact as OLD."""
        if not self._ndelta:
            return
        for rel in self._rel.values():
            for args, t in rel.items():
                if t == DELTA:
                    rel[args] = OLD
        self._ndelta = 0

    def facts(self, region: str = "all") -> set[Fact]:
        want = {"all": None, "old": OLD, "delta": DELTA}[region]
        return {Atom(p, a) for p, rel in self._rel.items() for a, t in rel.items()
                if want is None or t == want}

    def count(self, pred: str) -> int:
        return len(self._rel.get(pred, ()))

    def predicates(self):
        return [p for p, rel in self._rel.items() if rel]

    def relation(self, pred: str):
        """Argument tuples of ``pred`` (live view; do not mutate)."""
        return self._rel.get(pred, {}).keys()

    def lookup(self, pred: str, positions: tuple, key: tuple):
        """Argument tuples of ``pred`` whose values at ``positions`` equal ``key``."""
        rel = self._rel.get(pred)
        if not rel:
            return ()
        if not positions:
            return rel.keys()
        by_pos = self._idx.setdefault(pred, {})
        index = by_pos.get(positions)
        if index is None:
            index = {}
            for args in rel:
                index.setdefault(tuple(args[i] for i in positions), set()).add(args)
            by_pos[positions] = index
        return index.get(key, ())

    def scan(self, pred: str, positions: tuple, key: tuple):
        """Linear-scan version of :meth:`lookup` (used to check the indexes)."""
        return {a for a in self._rel.get(pred, {}) if tuple(a[i] for i in positions) == key}

    def copy(self) -> "FactStore":
        out = FactStore()
        for pred, rel in self._rel.items():
            out._rel[pred] = dict(rel)
        out._ndelta = self._ndelta
        return out


# -- regions ----------------------------------------------------------------
# A region is a view of facts an atom may be matched against: I, Δ, I \ Δ, ...

class Region:
    def lookup(self, pred, positions, key):
        raise NotImplementedError

    def has(self, pred: str) -> bool:
        return True


class Whole(Region):
    def __init__(self, store: FactStore):
        self.store = store

    def lookup(self, pred, positions, key):
        return self.store.lookup(pred, positions, key)

    def has(self, pred):
        return self.store.count(pred) > 0


class Tagged(Region):
    """Facts of ``store`` carrying ``tag``."""

    def __init__(self, store: FactStore, tag: int):
        self.store = store
        self.tag = tag

    def lookup(self, pred, positions, key):
        rel = self.store._rel.get(pred, {})
        return [a for a in self.store.lookup(pred, positions, key) if rel[a] == self.tag]

    def has(self, pred):
        if self.tag == DELTA and not self.store._ndelta:
            return False
        return self.store.count(pred) > 0


class Minus(Region):
    """Facts of ``store`` not in ``removed`` (a FactStore)."""

    def __init__(self, store: FactStore, removed: FactStore):
        self.store = store
        self.removed = removed

    def lookup(self, pred, positions, key):
        gone = self.removed._rel.get(pred)
        hits = self.store.lookup(pred, positions, key)
        if not gone:
            return hits
        return [a for a in hits if a not in gone]

    def has(self, pred):
        return self.store.count(pred) > self.removed.count(pred)


def as_store(facts) -> FactStore:
    return facts if isinstance(facts, FactStore) else FactStore(facts)


def labeled_regions(n: int, i: int, full: Region, delta: Region, rest: Region) -> list[Region]:
    """Regions of expression ``B_0^{I\\Δ} ... B_i^{Δ} ... B_n^{I}`` for body size ``n``."""
    return [rest] * i + [delta] + [full] * (n - i - 1)


# -- body matching ----------------------------------------------------------

class WorkCounter:
    """Counts candidate facts tried while extending partial substitutions."""

    __slots__ = ("substitutions",)

    def __init__(self):
        self.substitutions = 0


class _AtomPlan:
    __slots__ = ("pred", "positions", "key_src", "binds", "checks")

    def __init__(self, atom: Atom, slot: dict, bound: set):
        self.pred = atom.pred
        positions, key_src, binds, checks = [], [], [], []
        first_seen: dict[Var, int] = {}
        for pos, a in enumerate(atom.args):
            if not isinstance(a, Var):
                positions.append(pos)
                key_src.append((True, a))
            elif a in bound:
                positions.append(pos)
                key_src.append((False, slot[a]))
            elif a in first_seen:
                checks.append((first_seen[a], pos))
            else:
                first_seen[a] = pos
                binds.append((pos, slot[a]))
        self.positions = tuple(positions)
        self.key_src = tuple(key_src)
        self.binds = tuple(binds)
        self.checks = tuple(checks)
        bound.update(first_seen)


class BodyPlan:
    """Left-to-right matching plan for a sequence of atoms.

    ``variables`` fixes the slot order of produced substitutions; variables
    already bound by the caller (``prebound``) keep whatever the initial
    environment holds.
    """

    def __init__(self, atoms: Sequence[Atom], variables: Sequence[Var],
                 prebound: Iterable[Var] = ()):
        self.atoms = tuple(atoms)
        self.variables = tuple(variables)
        self.slot = {v: i for i, v in enumerate(self.variables)}
        bound = set(prebound)
        self.plans = [_AtomPlan(a, self.slot, bound) for a in self.atoms]

    def run(self, regions: Sequence[Region], counter: WorkCounter | None = None,
            env: list | None = None) -> Iterator[tuple]:
        """Yield every substitution (as a tuple over ``variables``)."""
        for region, plan in zip(regions, self.plans):
            if not region.has(plan.pred):
                return
        if env is None:
            env = [None] * len(self.variables)
        yield from self._extend(0, regions, env, counter)

    def _extend(self, depth, regions, env, counter):
        if depth == len(self.plans):
            yield tuple(env)
            return
        plan = self.plans[depth]
        key = tuple(v if const else env[v] for const, v in plan.key_src)
        candidates = regions[depth].lookup(plan.pred, plan.positions, key)
        if counter is not None:
            counter.substitutions += len(candidates)
        binds, checks = plan.binds, plan.checks
        last = depth + 1 == len(self.plans)
        for args in candidates:
            if checks and any(args[a] != args[b] for a, b in checks):
                continue
            for pos, s in binds:
                env[s] = args[pos]
            if last:
                yield tuple(env)
            else:
                yield from self._extend(depth + 1, regions, env, counter)


def instantiate(atom: Atom, slot: dict, values: tuple) -> Fact:
    return Atom(atom.pred, tuple(values[slot[a]] if isinstance(a, Var) else a for a in atom.args))


_plan_cache: dict = {}


def rule_plan(rule: Rule) -> BodyPlan:
    plan = _plan_cache.get(rule)
    if plan is None:
        plan = _plan_cache[rule] = BodyPlan(rule.body, rule.variables)
    return plan


def apply_rule(rule: Rule, store, counter: WorkCounter | None = None) -> set[Fact]:
    """``r[I]``: heads of every instance whose body lies in ``store``."""
    store = as_store(store)
    plan = rule_plan(rule)
    full = Whole(store)
    return {instantiate(rule.head, plan.slot, s)
            for s in plan.run([full] * len(rule.body), counter)}


def eval_body_labeled(rule: Rule, i: int, store, delta, counter: WorkCounter | None = None) -> set[tuple]:
    """Substitutions matching ``B_j`` in I\\Δ for j<i, ``B_i`` in Δ, ``B_j`` in I for j>i.

    Substitutions are tuples aligned with ``rule.variables``.
    """
    if not 0 <= i < len(rule.body):
        raise IndexError(f"body index {i} out of range for rule with {len(rule.body)} atoms")
    store = as_store(store)
    delta = as_store(delta)
    return set(labeled_substitutions(rule, i, Whole(store), Whole(delta), Minus(store, delta), counter))


def labeled_substitutions(rule: Rule, i: int, full: Region, delta: Region, rest: Region,
                          counter: WorkCounter | None = None) -> Iterator[tuple]:
    plan = rule_plan(rule)
    if not delta.has(rule.body[i].pred):
        return iter(())
    return plan.run(labeled_regions(len(rule.body), i, full, delta, rest), counter)


def delta_instances(rule: Rule, full: Region, delta: Region, rest: Region,
                    counter: WorkCounter | None = None) -> Iterator[tuple]:
    """Every instance whose body lies in I and meets Δ, each exactly once."""
    for i in range(len(rule.body)):
        yield from labeled_substitutions(rule, i, full, delta, rest, counter)
