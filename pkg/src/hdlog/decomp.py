"""Hypertree decompositions of rule bodies: representation, validity,
cost estimation and a bounded cost-guided search."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .core import SYMBOLS, Atom, Rule, Var, format_atom

DEFAULT_MAX_ATOMS = 12
DEFAULT_MAX_WIDTH = 3


class SearchSpaceExceeded(ValueError):
    pass


class MissingStatistics(KeyError):
    def __init__(self, pred):
        super().__init__(f"no statistics for predicate {pred}")
        self.pred = pred


@dataclass(frozen=True)
class DecompNode:
    id: int
    chi: tuple[Var, ...]
    lam: tuple[int, ...]  # indexes into the rule body


@dataclass
class HypertreeDecomposition:
    rule: Rule
    nodes: list[DecompNode]
    parent: dict[int, int | None]
    root: int = field(default=0)

    def __post_init__(self):
        self.by_id = {p.id: p for p in self.nodes}
        self.children: dict[int, list[int]] = {p.id: [] for p in self.nodes}
        for p in self.nodes:
            q = self.parent.get(p.id)
            if q is not None:
                self.children[q].append(p.id)

    def atoms(self, node_id: int) -> list[Atom]:
        return [self.rule.body[i] for i in self.by_id[node_id].lam]

    def neighbours(self, node_id: int) -> list[int]:
        out = list(self.children[node_id])
        if self.parent.get(node_id) is not None:
            out.append(self.parent[node_id])
        return out

    def bfs(self, start: int) -> list[tuple[int, int | None]]:
        """(node, node it was reached from) pairs, breadth-first from ``start``."""
        order = [(start, None)]
        seen = {start}
        i = 0
        while i < len(order):
            p = order[i][0]
            for q in sorted(self.neighbours(p)):
                if q not in seen:
                    seen.add(q)
                    order.append((q, p))
            i += 1
        return order

    def subtree(self, node_id: int) -> list[int]:
        out, stack = [], [node_id]
        while stack:
            p = stack.pop()
            out.append(p)
            stack.extend(self.children[p])
        return out

    def dump(self, symbols=None) -> str:
        lines = []
        for p in self.nodes:
            par = self.parent.get(p.id)
            chi = ",".join(str(v) for v in p.chi)
            lam = ",".join(format_atom(a, symbols or SYMBOLS) for a in self.atoms(p.id))
            lines.append(f"node {p.id} parent={'-' if par is None else par} chi={{{chi}}} lambda={{{lam}}}")
        return "\n".join(lines) + "\n"


def _vars(atoms: Iterable[Atom]) -> list[Var]:
    out: list[Var] = []
    for a in atoms:
        for v in a.variables():
            if v not in out:
                out.append(v)
    return out


# -- validity ---------------------------------------------------------------

@dataclass
class CheckResult:
    ok: bool
    condition: int | None = None
    witness: object = None
    message: str = ""

    def __bool__(self):
        return self.ok


def check_decomposition(rule: Rule, hd: HypertreeDecomposition) -> CheckResult:
    """Check the four hypertree-decomposition conditions, in order."""
    ids = [p.id for p in hd.nodes]
    if hd.root not in hd.by_id or hd.parent.get(hd.root) is not None:
        return CheckResult(False, 0, hd.root, "root missing or has a parent")
    if len(hd.bfs(hd.root)) != len(ids) or sum(1 for p in ids if hd.parent.get(p) is not None) != len(ids) - 1:
        return CheckResult(False, 0, None, "nodes do not form a rooted tree")
    for p in hd.nodes:
        if any(not 0 <= i < len(rule.body) for i in p.lam):
            return CheckResult(False, 0, p.id, "lambda refers to an atom outside the body")

    for i, atom in enumerate(rule.body):
        need = set(atom.variables())
        if not any(need <= set(p.chi) for p in hd.nodes):
            return CheckResult(False, 1, atom, f"body atom {i} not covered by any chi")

    for v in rule.variables:
        holders = {p.id for p in hd.nodes if v in p.chi}
        if holders:
            start = next(iter(holders))
            seen, stack = {start}, [start]
            while stack:
                q = stack.pop()
                for nb in hd.neighbours(q):
                    if nb in holders and nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
            if seen != holders:
                return CheckResult(False, 2, v, f"nodes holding {v} are not connected")

    for p in hd.nodes:
        extra = set(p.chi) - set(_vars(hd.atoms(p.id)))
        if extra:
            return CheckResult(False, 3, p.id, f"chi of node {p.id} exceeds var(lambda): {sorted(map(str, extra))}")

    for p in hd.nodes:
        below = set()
        for q in hd.subtree(p.id):
            below.update(hd.by_id[q].chi)
        leak = (set(_vars(hd.atoms(p.id))) & below) - set(p.chi)
        if leak:
            return CheckResult(False, 4, p.id, f"node {p.id} violates the descendant condition on {sorted(map(str, leak))}")
    return CheckResult(True)


def width(hd: HypertreeDecomposition) -> int:
    return max(len(p.lam) for p in hd.nodes)


# -- statistics and cost ----------------------------------------------------

@dataclass
class RelationStats:
    """Tuple count ``T`` and per-position distinct counts ``V`` per predicate."""

    table: dict[str, tuple[int, tuple[int, ...]]] = field(default_factory=dict)

    @classmethod
    def from_facts(cls, facts: Iterable[Atom], program=None) -> "RelationStats":
        rows: dict[str, list[tuple]] = {}
        for f in facts:
            rows.setdefault(f.pred, []).append(f.args)
        table = {}
        for pred, tuples in rows.items():
            arity = len(tuples[0])
            table[pred] = (len(tuples), tuple(len({t[i] for t in tuples}) for i in range(arity)))
        if program is not None:
            # predicates only derived by rules: sized like the largest input relation
            default = max((t for t, _ in table.values()), default=1)
            derived = [pred for pred in program.arities() if pred not in table]
            for pred, arity in program.arities().items():
                if pred not in table:
                    table[pred] = (default, (default,) * arity)
            # a derived column has at most as many values as the body columns feeding it
            for _ in range(len(derived)):
                changed = False
                for pred in derived:
                    t, old = table[pred]
                    cols = []
                    for pos in range(len(old)):
                        per_rule = []
                        for r in program:
                            if r.head.pred != pred:
                                continue
                            a = r.head.args[pos]
                            if not isinstance(a, Var):
                                per_rule.append(1)
                                continue
                            per_rule.append(min(table[b.pred][1][k] for b in r.body
                                                for k, x in enumerate(b.args) if x == a))
                        cols.append(min(default, max(per_rule, default=default)))
                    if tuple(cols) != old:
                        table[pred] = (t, tuple(cols))
                        changed = True
                if not changed:
                    break
        return cls(table)

    @classmethod
    def uniform(cls, arities: dict[str, int], size: int = 100, distinct: int | None = None):
        d = size if distinct is None else distinct
        return cls({p: (size, (d,) * a) for p, a in arities.items()})

    def get(self, pred: str):
        try:
            return self.table[pred]
        except KeyError:
            raise MissingStatistics(pred) from None


def _atom_estimate(atom: Atom, stats: RelationStats):
    t, v = stats.get(atom.pred)
    size = float(t)
    distinct: dict[Var, float] = {}
    for pos, a in enumerate(atom.args):
        vp = max(1, v[pos]) if pos < len(v) else max(1.0, t)
        if not isinstance(a, Var):
            size /= vp
        elif a in distinct:
            size /= max(vp, distinct[a])
            distinct[a] = min(vp, distinct[a])
        else:
            distinct[a] = vp
    return size, distinct


def node_estimate(atoms: list[Atom], stats: RelationStats) -> tuple[float, float]:
    """(estimated join size, sum of left-to-right intermediate sizes)."""
    size, distinct = _atom_estimate(atoms[0], stats)
    distinct = {k: min(x, max(size, 1.0)) for k, x in distinct.items()}
    work = size
    for atom in atoms[1:]:
        s2, d2 = _atom_estimate(atom, stats)
        denom = 1.0
        for var, x in d2.items():
            if var in distinct:
                denom *= max(distinct[var], x)
        new = size * s2 / denom
        merged = dict(distinct)
        for var, x in d2.items():
            merged[var] = min(merged.get(var, x), x)
        size = new
        distinct = {k: min(x, max(size, 1.0)) for k, x in merged.items()}
        work += size
    return size, work


def estimate_cost(hd: HypertreeDecomposition, stats: RelationStats) -> float:
    sizes = {}
    total = 0.0
    for p in hd.nodes:
        size, work = node_estimate(hd.atoms(p.id), stats)
        sizes[p.id] = size
        total += work
    for p in hd.nodes:
        q = hd.parent.get(p.id)
        if q is not None:
            total += 2 * (sizes[p.id] + sizes[q])
    return total


# -- search -----------------------------------------------------------------

def partitions(n: int, max_block: int) -> Iterator[list[list[int]]]:
    """Set partitions of ``range(n)`` with blocks of at most ``max_block`` items,
    blocks ordered by their smallest element."""
    blocks: list[list[int]] = []

    def rec(i):
        if i == n:
            yield [list(b) for b in blocks]
            return
        for b in blocks:
            if len(b) < max_block:
                b.append(i)
                yield from rec(i + 1)
                b.pop()
        blocks.append([i])
        yield from rec(i + 1)
        blocks.pop()

    yield from rec(0)


def _tree(sets: list[set]) -> dict[int, int | None]:
    """Maximum-weight spanning tree on shared-variable counts (Kruskal, stable ties)."""
    k = len(sets)
    edges = sorted((-len(sets[i] & sets[j]), i, j) for i in range(k) for j in range(i + 1, k))
    comp = list(range(k))

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    adj: dict[int, list[int]] = {i: [] for i in range(k)}
    for _, i, j in edges:
        a, b = find(i), find(j)
        if a != b:
            comp[a] = b
            adj[i].append(j)
            adj[j].append(i)
    parent: dict[int, int | None] = {0: None}
    stack = [0]
    while stack:
        p = stack.pop()
        for q in sorted(adj[p]):
            if q not in parent:
                parent[q] = p
                stack.append(q)
    return parent


def _connected(sets: list[set], parent: dict) -> bool:
    # every variable's holders form a subtree: exactly one holder lacks a holding parent
    tops: Counter = Counter()
    for i, vs in enumerate(sets):
        q = parent[i]
        for v in vs if q is None else vs - sets[q]:
            tops[v] += 1
    return all(c == 1 for c in tops.values())


def _build(rule: Rule, blocks: list[list[int]]) -> HypertreeDecomposition:
    chis = [tuple(_vars(rule.body[i] for i in b)) for b in blocks]
    parent = _tree([set(c) for c in chis])
    nodes = [DecompNode(i, chis[i], tuple(b)) for i, b in enumerate(blocks)]
    return HypertreeDecomposition(rule, nodes, parent, 0)


def candidates(rule: Rule, max_width: int) -> Iterator[HypertreeDecomposition]:
    """Valid decompositions with chi(p) = var(lambda(p)), one tree per partition."""
    atom_vars = [set(a.variables()) for a in rule.body]
    for blocks in partitions(len(rule.body), max_width):
        sets = [set().union(*(atom_vars[i] for i in b)) for b in blocks]
        if not _connected(sets, _tree(sets)):
            continue
        hd = _build(rule, blocks)
        if check_decomposition(rule, hd):
            yield hd


def _rank(hd, stats):
    # ties: prefer a root that already holds every head variable, so child
    # results can be projected onto the root schema during the cross-node join
    root_chi = set(hd.by_id[hd.root].chi)
    missing = sum(1 for v in hd.rule.head_variables() if v not in root_chi)
    return (estimate_cost(hd, stats), width(hd), len(hd.nodes), missing,
            tuple(sorted(p.lam for p in hd.nodes)))


def decompose(rule: Rule, stats: RelationStats, max_atoms: int = DEFAULT_MAX_ATOMS,
              max_width: int = DEFAULT_MAX_WIDTH, exhaustive: bool = False) -> HypertreeDecomposition:
    """Cheapest decomposition of width at most ``max_width``.

    With ``exhaustive`` every width is searched and the minimum width wins
    before cost is compared, so the result has width hw(r).
    """
    n = len(rule.body)
    if n > max_atoms:
        raise SearchSpaceExceeded(f"rule {rule.id} has {n} body atoms (bound {max_atoms})")
    if exhaustive:
        for w in range(1, n + 1):
            found = list(candidates_of_width(rule, w))
            if found:
                return min(found, key=lambda hd: _rank(hd, stats))
    found = list(candidates(rule, max_width))
    if not found:
        found = [_build(rule, [list(range(n))])]
    return min(found, key=lambda hd: _rank(hd, stats))


def candidates_of_width(rule: Rule, w: int) -> Iterator[HypertreeDecomposition]:
    for hd in candidates(rule, w):
        if width(hd) == w:
            yield hd


def hypertree_width(rule: Rule) -> int:
    for w in range(1, len(rule.body) + 1):
        if next(candidates(rule, w), None) is not None:
            return w
    return len(rule.body)


def is_complex(rule: Rule, stats: RelationStats | None = None,
               max_atoms: int = DEFAULT_MAX_ATOMS) -> bool:
    """True iff no width-1 decomposition exists."""
    if len(rule.body) > max_atoms:
        raise SearchSpaceExceeded(f"rule {rule.id} has {len(rule.body)} body atoms (bound {max_atoms})")
    return not check_decomposition(rule, _build(rule, [[i] for i in range(len(rule.body))]))


def single_node(rule: Rule) -> HypertreeDecomposition:
    lam = tuple(range(len(rule.body)))
    return HypertreeDecomposition(rule, [DecompNode(0, tuple(rule.variables), lam)], {0: None}, 0)


def from_blocks(rule: Rule, blocks: list[list[int]], parent: dict[int, int | None] | None = None,
                chis: list[tuple[Var, ...]] | None = None, root: int = 0) -> HypertreeDecomposition:
    """Hand-built decomposition; defaults to chi = var(lambda) and a chain tree."""
    if chis is None:
        chis = [tuple(_vars(rule.body[i] for i in b)) for b in blocks]
    if parent is None:
        parent = {i: (i - 1 if i else None) for i in range(len(blocks))}
    nodes = [DecompNode(i, tuple(chis[i]), tuple(b)) for i, b in enumerate(blocks)]
    return HypertreeDecomposition(rule, nodes, parent, root)
