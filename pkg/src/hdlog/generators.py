"""Benchmark generators: the collaborator dataset and the Exp expression trees."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .core import SYMBOLS, Program, SymbolTable, fact, parse_program

PC_RULE = "PC(?x,?y) :- CW(?x,?z1), CA(?x,?z2), PC(?z1,?y), PC(?z2,?y).\n"


@dataclass(frozen=True)
class CollabParams:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError(f"collaborator dataset needs n >= 1 and k >= 1 (got n={self.n}, k={self.k})")


def gen_collab(p: CollabParams, symbols: SymbolTable | None = None):
    """The PossibleCollaborator rule and its 4nk+2 explicit facts."""
    symbols = symbols or SYMBOLS
    n, k = p.n, p.k
    facts = set()
    for i in range(n):
        for j in range(1, k + 1):
            idx = i * k + j
            facts.add(fact("CW", f"a{i}", f"b{idx}", symbols=symbols))
            facts.add(fact("CA", f"a{i}", f"c{idx}", symbols=symbols))
            facts.add(fact("PC", f"b{idx}", f"d{j}", symbols=symbols))
            facts.add(fact("PC", f"c{idx}", f"d{j}", symbols=symbols))
    facts.add(fact("CW", f"a{n}", "a2", symbols=symbols))
    facts.add(fact("CA", f"a{n}", "a3", symbols=symbols))
    return parse_program(PC_RULE, symbols), facts


@dataclass(frozen=True)
class ExpParams:
    num_expressions: int
    num_value_sets: int
    max_depth: int
    seed: int = 0
    domain: int = 50

    def __post_init__(self):
        for name in ("num_expressions", "num_value_sets", "max_depth", "domain"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


OPS = (("add", "isAdd", "sum"), ("sub", "isSub", "diff"), ("mul", "isMul", "prod"))

_OP_RULE = ("eval(?n,?s,?v) :- node(?n,?o,?l,?r), {guard}(?o), eval(?l,?s,?a), {table}(?a,?b,?v), "
            "eval(?r,?s,?b), inExpr(?n,?e), valueSet(?e,?s), num(?a), num(?b).\n")
LEAF_RULE = "eval(?n,?s,?v) :- leaf(?n,?x), binding(?s,?x,?v).\n"


def exp_program_text() -> str:
    return LEAF_RULE + "".join(_OP_RULE.format(guard=g, table=t) for _, g, t in OPS)


def gen_exp(p: ExpParams, symbols: SymbolTable | None = None, leaf_probability: float = 0.3):
    """Random expression trees evaluated over value sets, modulo ``p.domain``.

    Facts: ``node(id,op,left,right)``, ``leaf(id,var)``, ``inExpr(id,expr)``,
    ``valueSet(expr,set)``, ``binding(set,var,value)``, operator guards, the
    value domain ``num`` and the closed arithmetic tables ``sum``/``diff``/``prod``.
    """
    symbols = symbols or SYMBOLS
    rng = random.Random(p.seed)
    m = p.domain
    rows: list[tuple] = []
    for name, guard, _ in OPS:
        rows.append((guard, name))
    for a in range(m):
        rows.append(("num", a))
        for b in range(m):
            rows.append(("sum", a, b, (a + b) % m))
            rows.append(("diff", a, b, (a - b) % m))
            rows.append(("prod", a, b, (a * b) % m))

    for e in range(p.num_expressions):
        expr = f"e{e}"
        counter = [0]
        used_vars: list[str] = []

        def build(depth):
            nid = f"{expr}_n{counter[0]}"
            counter[0] += 1
            rows.append(("inExpr", nid, expr))
            if depth >= p.max_depth or (depth > 1 and rng.random() < leaf_probability):
                var = f"{expr}_x{rng.randrange(3)}"
                if var not in used_vars:
                    used_vars.append(var)
                rows.append(("leaf", nid, var))
                return nid
            op = OPS[rng.randrange(len(OPS))][0]
            left = build(depth + 1)
            right = build(depth + 1)
            rows.append(("node", nid, op, left, right))
            return nid

        build(1)
        for t in range(p.num_value_sets):
            sid = f"{expr}_s{t}"
            rows.append(("valueSet", expr, sid))
            for var in used_vars:
                rows.append(("binding", sid, var, rng.randrange(m)))

    facts = {fact(r[0], *r[1:], symbols=symbols) for r in rows}
    return parse_program(exp_program_text(), symbols), facts


def evaluate_expressions(facts, symbols: SymbolTable | None = None) -> set:
    """Direct recursive evaluation of the encoded trees: (node, set, value) names."""
    symbols = symbols or SYMBOLS
    name = symbols.name
    nodes, leaves, in_expr, sets, bindings = {}, {}, {}, {}, {}
    domain = 0
    for f in facts:
        args = [name(a) for a in f.args]
        if f.pred == "node":
            nodes[args[0]] = args[1:]
        elif f.pred == "leaf":
            leaves[args[0]] = args[1]
        elif f.pred == "inExpr":
            in_expr[args[0]] = args[1]
        elif f.pred == "valueSet":
            sets.setdefault(args[0], []).append(args[1])
        elif f.pred == "binding":
            bindings[(args[0], args[1])] = int(args[2])
        elif f.pred == "sum":
            domain = max(domain, int(args[0]) + 1)
    ops = {"add": lambda a, b: (a + b) % domain, "sub": lambda a, b: (a - b) % domain,
           "mul": lambda a, b: (a * b) % domain}

    def value(nid, s):
        if nid in leaves:
            return bindings.get((s, leaves[nid]))
        op, left, right = nodes[nid]
        a, b = value(left, s), value(right, s)
        return None if a is None or b is None else ops[op](a, b)

    out = set()
    for nid, expr in in_expr.items():
        for s in sets.get(expr, ()):
            v = value(nid, s)
            if v is not None:
                out.add((nid, s, str(v)))
    return out
