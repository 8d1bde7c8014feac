"""Relational intermediate representation for systems of equations.

An EquationSystem is six tables: variables, tangent-variable markers, unary
and binary operator applications, summations, and summands.  Foreign keys
are 0-based row indices.  The time-derivative operator is stored as an
ordinary unary row named `∂ₜ`; structural validation and scheduling treat
those rows specially.
"""

import json
from dataclasses import dataclass, field

from .errors import ModelTypeError

DT = "∂ₜ"

VAR_TYPES = ("Form0", "Form1", "Form2", "DualForm0", "DualForm1", "DualForm2",
             "Literal", "Infer")

# signatures of the de Rham operators used for type inference and binding
OPERATOR_SIGNATURES = {
    "d₀": (("Form0",), "Form1"),
    "d₁": (("Form1",), "Form2"),
    "d̃₀": (("DualForm0",), "DualForm1"),
    "d̃₁": (("DualForm1",), "DualForm2"),
    "⋆₀": (("Form0",), "DualForm2"),
    "⋆₁": (("Form1",), "DualForm1"),
    "⋆₂": (("Form2",), "DualForm0"),
    "⋆₀⁻¹": (("DualForm2",), "Form0"),
    "⋆₁⁻¹": (("DualForm1",), "Form1"),
    "⋆₂⁻¹": (("DualForm0",), "Form2"),
    "Δ₀": (("Form0",), "Form0"),
    "∧₀₀": (("Form0", "Form0"), "Form0"),
    "∧₀₁": (("Form0", "Form1"), "Form1"),
    "∧₁₁": (("Form1", "Form1"), "Form2"),
}

# ASCII spellings accepted by the parser, normalized to the canonical names
OPERATOR_ALIASES = {
    "dt": DT,
    "d0": "d₀", "d1": "d₁",
    "dual_d0": "d̃₀", "dual_d1": "d̃₁",
    "star0": "⋆₀", "star1": "⋆₁", "star2": "⋆₂",
    "inv_star0": "⋆₀⁻¹", "inv_star1": "⋆₁⁻¹", "inv_star2": "⋆₂⁻¹",
    "wedge00": "∧₀₀", "wedge01": "∧₀₁", "wedge11": "∧₁₁",
    "laplacian0": "Δ₀",
}


@dataclass
class VarRow:
    name: str
    type: str = "Infer"


@dataclass
class TVarRow:
    incl: int


@dataclass
class Op1Row:
    src: int
    tgt: int
    op1: str


@dataclass
class Op2Row:
    proj1: int
    proj2: int
    res: int
    op2: str


@dataclass
class SumRow:
    sum: int


@dataclass
class SummandRow:
    summand: int
    summation: int


@dataclass
class EquationSystem:
    vars: list = field(default_factory=list)
    tvars: list = field(default_factory=list)
    op1s: list = field(default_factory=list)
    op2s: list = field(default_factory=list)
    sums: list = field(default_factory=list)
    summands: list = field(default_factory=list)

    def check(self):
        names = [v.name for v in self.vars]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate variable names: {dup}")
        nv, ns = len(self.vars), len(self.sums)
        for tv in self.tvars:
            _check_ref(tv.incl, nv, "TVar.incl")
        for op in self.op1s:
            _check_ref(op.src, nv, "Op1.src")
            _check_ref(op.tgt, nv, "Op1.tgt")
        for op in self.op2s:
            for r, label in ((op.proj1, "Op2.proj1"), (op.proj2, "Op2.proj2"),
                             (op.res, "Op2.res")):
                _check_ref(r, nv, label)
        for s in self.sums:
            _check_ref(s.sum, nv, "Sigma.sum")
        for s in self.summands:
            _check_ref(s.summand, nv, "Summand.summand")
            _check_ref(s.summation, ns, "Summand.summation")
        for v in self.vars:
            if v.type not in VAR_TYPES:
                raise ValueError(f"unknown variable type {v.type!r}")
        return self

    def var_index(self, name):
        for i, v in enumerate(self.vars):
            if v.name == name:
                return i
        raise KeyError(f"no variable named {name!r}")

    def var_names(self):
        return [v.name for v in self.vars]

    def summands_of(self, sum_row_index):
        return [s.summand for s in self.summands if s.summation == sum_row_index]

    def defining_ops(self, exclude_dt=True):
        """Map var index -> list of ("op1"|"op2"|"sum", row index) defining it."""
        out = {i: [] for i in range(len(self.vars))}
        for r, op in enumerate(self.op1s):
            if exclude_dt and op.op1 == DT:
                continue
            out[op.tgt].append(("op1", r))
        for r, op in enumerate(self.op2s):
            out[op.res].append(("op2", r))
        for r, s in enumerate(self.sums):
            out[s.sum].append(("sum", r))
        return out

    def tangent_pairs(self):
        """(state index, tangent index) for every ∂ₜ row."""
        return [(op.src, op.tgt) for op in self.op1s if op.op1 == DT]


def _check_ref(value, size, label):
    if not 0 <= value < size:
        raise ValueError(f"dangling foreign key {label} = {value} (table size {size})")


def unify_types(a, b):
    """Least committed common type; Infer yields, Literal stays polymorphic."""
    if a == b:
        return a
    if a == "Infer":
        return b
    if b == "Infer":
        return a
    if a == "Literal" or b == "Literal":
        return "Literal"
    raise ModelTypeError(f"cannot unify types {a} and {b}")


def infer_types(system):
    """Propagate de Rham operator signatures to variable types, to fixpoint.

    Operators without a known signature impose no constraint; `∂ₜ` preserves
    type; summations force all summands and the sum to agree.  Literal
    variables never take on a form type.  Conflicts raise ModelTypeError.
    """
    types = [v.type for v in system.vars]

    def merge(i, t):
        if types[i] == "Literal":
            return False  # parameters stay shape-polymorphic
        new = unify_types(types[i], t)
        if new != types[i]:
            types[i] = new
            return True
        return False

    changed = True
    while changed:
        changed = False
        for op in system.op1s:
            if op.op1 == DT:
                if types[op.src] not in ("Infer", "Literal"):
                    changed |= merge(op.tgt, types[op.src])
                if types[op.tgt] not in ("Infer", "Literal"):
                    changed |= merge(op.src, types[op.tgt])
                continue
            sig = OPERATOR_SIGNATURES.get(op.op1)
            if sig is None:
                continue
            changed |= merge(op.src, sig[0][0])
            changed |= merge(op.tgt, sig[1])
        for op in system.op2s:
            sig = OPERATOR_SIGNATURES.get(op.op2)
            if sig is None:
                continue
            changed |= merge(op.proj1, sig[0][0])
            changed |= merge(op.proj2, sig[0][1])
            changed |= merge(op.res, sig[1])
        for r, s in enumerate(system.sums):
            members = [s.sum] + system.summands_of(r)
            concrete = "Infer"
            for m in members:
                if types[m] not in ("Infer", "Literal"):
                    concrete = unify_types(concrete, types[m])
            if concrete != "Infer":
                for m in members:
                    changed |= merge(m, concrete)

    for v, t in zip(system.vars, types):
        v.type = t
    return system


@dataclass
class Violation:
    rule: int
    element: str
    message: str


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        return "\n".join(v.message for v in self.violations) or "ok"


def _dependency_edges(system):
    """Var-level (input -> output) edges, tangent rows excluded."""
    edges = []
    for op in system.op1s:
        if op.op1 != DT:
            edges.append((op.src, op.tgt))
    for op in system.op2s:
        edges.append((op.proj1, op.res))
        edges.append((op.proj2, op.res))
    for r, s in enumerate(system.sums):
        for m in system.summands_of(r):
            edges.append((m, s.sum))
    return edges


def find_cycle(system):
    """One directed cycle in the dependency graph as a list of var names, or None."""
    nv = len(system.vars)
    adj = [[] for _ in range(nv)]
    for a, b in _dependency_edges(system):
        adj[a].append(b)
    color = [0] * nv  # 0 unseen, 1 on stack, 2 done
    parent = [-1] * nv

    for root in range(nv):
        if color[root]:
            continue
        stack = [(root, iter(adj[root]))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 0:
                    color[nxt] = 1
                    parent[nxt] = node
                    stack.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
                if color[nxt] == 1:
                    cycle = [nxt]
                    cur = node
                    while cur != nxt and cur != -1:
                        cycle.append(cur)
                        cur = parent[cur]
                    cycle.reverse()
                    return [system.vars[i].name for i in cycle]
            if not advanced:
                color[node] = 2
                stack.pop()
    return None


def validate(system, state_vars):
    """Check the four structural compilability rules.

    1. the dependency graph (tangent edges excluded) is acyclic;
    2. every state variable has exactly one time derivative, and no other
       variable has one;
    3. every non-state, non-parameter variable has a defining operator;
    4. no variable has more than one defining operator.
    """
    state_idx = set()
    for name in state_vars:
        try:
            state_idx.add(system.var_index(name))
        except KeyError as exc:
            raise ValueError(f"unknown state variable {name!r}") from exc

    report = ValidationReport()

    cycle = find_cycle(system)
    if cycle is not None:
        report.violations.append(Violation(
            1, cycle[0], "rule 1: dependency cycle: " + " -> ".join(cycle)))

    dt_count = {i: 0 for i in range(len(system.vars))}
    for op in system.op1s:
        if op.op1 == DT:
            dt_count[op.src] += 1
    for i in sorted(state_idx):
        n = dt_count[i]
        if n != 1:
            name = system.vars[i].name
            report.violations.append(Violation(
                2, name, f"rule 2: state variable {name} has {n} time derivatives"))
    for i, n in dt_count.items():
        if n > 0 and i not in state_idx:
            name = system.vars[i].name
            report.violations.append(Violation(
                2, name,
                f"rule 2: {name} has a time derivative but is not a state variable"))

    defs = system.defining_ops()
    for i, v in enumerate(system.vars):
        if i in state_idx or v.type == "Literal":
            continue
        n = len(defs[i])
        if n == 0:
            report.violations.append(Violation(
                3, v.name, f"rule 3: {v.name} has no defining operator"))
    for i, v in enumerate(system.vars):
        n = len(defs[i])
        if n > 1:
            report.violations.append(Violation(
                4, v.name, f"rule 4: {v.name} has {n} defining operators"))
    return report


# ---------------------------------------------------------------------------
# serialization

def to_json_dict(system):
    """The six tables as arrays of row objects with 0-based refs."""
    return {
        "Var": [{"name": v.name, "type": v.type} for v in system.vars],
        "TVar": [{"incl": t.incl} for t in system.tvars],
        "Op1": [{"src": o.src, "tgt": o.tgt, "op1": o.op1} for o in system.op1s],
        "Op2": [{"proj1": o.proj1, "proj2": o.proj2, "res": o.res, "op2": o.op2}
                for o in system.op2s],
        "Sigma": [{"sum": s.sum} for s in system.sums],
        "Summand": [{"summand": s.summand, "summation": s.summation}
                    for s in system.summands],
    }


def from_json_dict(doc):
    system = EquationSystem(
        vars=[VarRow(r["name"], r.get("type", "Infer")) for r in doc.get("Var", [])],
        tvars=[TVarRow(r["incl"]) for r in doc.get("TVar", [])],
        op1s=[Op1Row(r["src"], r["tgt"], r["op1"]) for r in doc.get("Op1", [])],
        op2s=[Op2Row(r["proj1"], r["proj2"], r["res"], r["op2"])
              for r in doc.get("Op2", [])],
        sums=[SumRow(r["sum"]) for r in doc.get("Sigma", [])],
        summands=[SummandRow(r["summand"], r["summation"])
                  for r in doc.get("Summand", [])],
    )
    return system.check()


def dumps(system, indent=2):
    return json.dumps(to_json_dict(system), ensure_ascii=False, indent=indent)


def loads(text):
    return from_json_dict(json.loads(text))


def is_anonymous(name):
    return name.startswith("•")


def pretty(system):
    """Equation-source text that reparses to an isomorphic system."""
    lines = []
    names = system.var_names()
    for v in system.vars:
        if v.type == "Literal":
            lines.append(f"param {v.name}")
        elif v.type != "Infer":
            lines.append(f"{v.name} :: {v.type}")
    for op in system.op1s:
        if op.op1 == DT:
            lines.append(f"{names[op.tgt]} == {DT}({names[op.src]})")
        else:
            lines.append(f"{names[op.tgt]} == {op.op1}({names[op.src]})")
    for op in system.op2s:
        lines.append(f"{names[op.res]} == {op.op2}({names[op.proj1]}, {names[op.proj2]})")
    for r, s in enumerate(system.sums):
        args = ", ".join(names[m] for m in system.summands_of(r))
        lines.append(f"{names[s.sum]} == sum({args})")
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# rendering

def to_dot(system, graph_name="model"):
    """Deterministic DOT rendering.

    Variables are nodes (anonymous ones drawn as •), unary operators are
    labeled edges, binary operators are box nodes, summations are circle
    nodes.  Tangent edges are drawn dashed and unlabeled.
    """
    out = [f"digraph {graph_name} {{"]
    for i, v in enumerate(system.vars):
        label = "•" if is_anonymous(v.name) else v.name
        out.append(f'  v{i} [label="{label}"];')
    for op in system.op1s:
        if op.op1 == DT:
            out.append(f"  v{op.src} -> v{op.tgt} [style=dashed];")
        else:
            out.append(f'  v{op.src} -> v{op.tgt} [label="{op.op1}"];')
    for r, op in enumerate(system.op2s):
        out.append(f'  b{r} [label="{op.op2}", shape=box];')
        out.append(f"  v{op.proj1} -> b{r};")
        out.append(f"  v{op.proj2} -> b{r};")
        out.append(f"  b{r} -> v{op.res};")
    for r, s in enumerate(system.sums):
        out.append(f'  s{r} [label="Σ", shape=circle];')
        for m in system.summands_of(r):
            out.append(f"  v{m} -> s{r};")
        out.append(f"  s{r} -> v{s.sum};")
    out.append("}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# isomorphism (used by composition tests and acceptance checks)

def _row_multiset(system, mapping):
    rows = []
    for op in system.op1s:
        rows.append(("op1", op.op1, mapping[op.src], mapping[op.tgt]))
    for op in system.op2s:
        rows.append(("op2", op.op2, mapping[op.proj1], mapping[op.proj2],
                     mapping[op.res]))
    for r, s in enumerate(system.sums):
        rows.append(("sum", mapping[s.sum],
                     tuple(sorted(mapping[m] for m in system.summands_of(r)))))
    for t in system.tvars:
        rows.append(("tvar", mapping[t.incl]))
    return sorted(rows)


def _var_signature(system, i):
    v = system.vars[i]
    outs = sorted([op.op1 for op in system.op1s if op.src == i]
                  + [op.op2 for op in system.op2s if i in (op.proj1, op.proj2)])
    ins = sorted([op.op1 for op in system.op1s if op.tgt == i]
                 + [op.op2 for op in system.op2s if op.res == i])
    n_sum_in = sum(1 for s in system.sums if s.sum == i)
    n_sum_out = sum(1 for s in system.summands if s.summand == i)
    n_tvar = sum(1 for t in system.tvars if t.incl == i)
    return (v.type, tuple(outs), tuple(ins), n_sum_in, n_sum_out, n_tvar)


def is_isomorphic(a, b, match_names=False):
    """Structural equality up to a bijection on variables.

    With match_names=True, non-anonymous names must map to themselves.
    """
    if (len(a.vars), len(a.tvars), len(a.op1s), len(a.op2s), len(a.sums),
            len(a.summands)) != (len(b.vars), len(b.tvars), len(b.op1s),
                                 len(b.op2s), len(b.sums), len(b.summands)):
        return False
    na, nb = len(a.vars), len(b.vars)
    sig_a = [_var_signature(a, i) for i in range(na)]
    sig_b = [_var_signature(b, i) for i in range(nb)]
    if sorted(sig_a) != sorted(sig_b):
        return False

    candidates = []
    for i in range(na):
        cs = [j for j in range(nb) if sig_b[j] == sig_a[i]]
        if match_names and not is_anonymous(a.vars[i].name):
            cs = [j for j in cs if b.vars[j].name == a.vars[i].name]
        if not cs:
            return False
        candidates.append(cs)

    order = sorted(range(na), key=lambda i: len(candidates[i]))
    mapping = [-1] * na
    used = [False] * nb

    def assign(pos):
        if pos == na:
            return _row_multiset(a, mapping) == _row_multiset(
                b, list(range(nb)))
        i = order[pos]
        for j in candidates[i]:
            if not used[j]:
                mapping[i] = j
                used[j] = True
                if assign(pos + 1):
                    return True
                used[j] = False
                mapping[i] = -1
        return False

    return assign(0)
