"""Schedule a validated model into an ordered call list and bind kernels.

Scheduling sweeps the unary, binary, and summation tables repeatedly in row
order, emitting any operation whose inputs have all been visited and marking
its output visited.  Tangent (`∂ₜ`) rows are skipped; state variables and
parameters start out visited.  The sweep count is bounded by the total
number of operator rows, so identical tables always produce byte-identical
schedules.

Binding resolves every operator name to a kernel (sparse matrix apply,
pointwise function, scalar multiply, or mask) and pre-sizes one buffer per
variable; evaluation then just runs the call list in place.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import dec
from .dec import FORM_TYPES
from .errors import (BindingTypeError, CyclicDependencyError,
                     MissingBindingError, NotCompilableError)
from .ir import DT, OPERATOR_SIGNATURES, find_cycle, unify_types, validate

SET_VALUE = "set_value"
SET_ZERO = "set_zero"


@dataclass
class BoundaryMask:
    """Overwrite designated entries of a variable after it is computed."""

    target: str
    indices: np.ndarray
    mode: str = SET_ZERO
    values: np.ndarray = None

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.mode not in (SET_VALUE, SET_ZERO):
            raise ValueError(f"unknown mask mode {self.mode!r}")
        if np.any(self.indices < 0):
            raise ValueError("mask indices must be non-negative")
        if self.mode == SET_VALUE:
            if self.values is None:
                raise ValueError("set_value mask needs values")
            self.values = np.asarray(self.values, dtype=np.float64)
            if self.values.shape == ():
                self.values = np.full(len(self.indices), float(self.values))
            if len(self.values) != len(self.indices):
                raise ValueError("mask values length must match indices length")

    def apply(self, buf):
        if self.mode == SET_ZERO:
            buf[self.indices] = 0.0
        else:
            buf[self.indices] = self.values


@dataclass
class Call:
    kind: str                 # "unary" | "binary" | "varargs" | "mask"
    operator: str
    inputs: tuple
    output: str
    mask: BoundaryMask = None

    def to_json_dict(self):
        doc = {"kind": self.kind, "op": self.operator,
               "inputs": list(self.inputs), "output": self.output}
        if self.mask is not None:
            doc["mask"] = {"mode": self.mask.mode,
                           "indices": self.mask.indices.tolist()}
            if self.mask.values is not None:
                doc["mask"]["values"] = self.mask.values.tolist()
        return doc


@dataclass
class Schedule:
    calls: list
    state_vars: list
    tangent_vars: list        # (tangent name, state name) pairs
    var_types: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps([c.to_json_dict() for c in self.calls],
                          ensure_ascii=False, indent=2)

    def listing(self):
        lines = [f"state:   {', '.join(self.state_vars)}"]
        for t, s in self.tangent_vars:
            lines.append(f"tangent: {t}  ({DT} {s})")
        for n, c in enumerate(self.calls, start=1):
            if c.kind == "mask":
                desc = f"mask[{c.mask.mode}, {len(c.mask.indices)} indices]({c.inputs[0]})"
            else:
                desc = f"{c.operator}({', '.join(c.inputs)})"
            lines.append(f"{n:3d}. {c.output} <- {desc}")
        return "\n".join(lines) + "\n"


def build_schedule(system, state_vars, validated=False):
    """Order the operator rows of a model into an executable call list.

    The model must pass `validate` for the given state variables; a failing
    report raises NotCompilableError carrying it.  A sweep fixpoint with
    rows left over (impossible after validation, kept as a guard for callers
    that bypass it) raises CyclicDependencyError.
    """
    if not validated:
        report = validate(system, state_vars)
        if not report.ok:
            raise NotCompilableError(report)

    names = system.var_names()
    visited = [False] * len(names)
    params = set()
    for i, v in enumerate(system.vars):
        if v.type == "Literal":
            visited[i] = True
            params.add(i)
    for s in state_vars:
        visited[system.var_index(s)] = True

    consumed1 = [False] * len(system.op1s)
    consumed2 = [False] * len(system.op2s)
    consumed_s = [False] * len(system.sums)
    calls = []
    total = len(system.op1s) + len(system.op2s) + len(system.sums)

    for _ in range(total):
        progress = False
        for r, op in enumerate(system.op1s):
            if consumed1[r] or not visited[op.src]:
                continue
            if op.op1 == DT:
                consumed1[r] = True
                continue
            consumed1[r] = True
            visited[op.tgt] = True
            calls.append(Call("unary", op.op1, (names[op.src],), names[op.tgt]))
            progress = True
        for r, op in enumerate(system.op2s):
            if consumed2[r] or not (visited[op.proj1] and visited[op.proj2]):
                continue
            consumed2[r] = True
            visited[op.res] = True
            calls.append(Call("binary", op.op2,
                              (names[op.proj1], names[op.proj2]), names[op.res]))
            progress = True
        for r, s in enumerate(system.sums):
            args = system.summands_of(r)
            if consumed_s[r] or not all(visited[a] for a in args):
                continue
            consumed_s[r] = True
            visited[s.sum] = True
            calls.append(Call("varargs", "+", tuple(names[a] for a in args),
                              names[s.sum]))
            progress = True
        if all(consumed1) and all(consumed2) and all(consumed_s):
            break
        if not progress:
            cycle = find_cycle(system)
            stuck = cycle if cycle else [
                names[op.tgt] for r, op in enumerate(system.op1s) if not consumed1[r]
            ] + [names[op.res] for r, op in enumerate(system.op2s) if not consumed2[r]]
            raise CyclicDependencyError(stuck)

    tangent_pairs = dict()
    for s, t in system.tangent_pairs():
        tangent_pairs.setdefault(names[s], names[t])
    tangents = [(tangent_pairs[s], s) for s in state_vars if s in tangent_pairs]

    return Schedule(calls, list(state_vars), tangents,
                    {v.name: v.type for v in system.vars})


def attach_masks(schedule, masks, mesh=None):
    """Insert mask calls: state-variable masks at the start, tangent-variable
    masks at the end, every other mask directly after its target's defining
    call.  Returns a new Schedule; `mesh` (optional) enables eager index
    range checks.
    """
    calls = list(schedule.calls)
    known = set(schedule.var_types)
    tangent_names = {t for t, _ in schedule.tangent_vars}

    for mask in masks:
        if mask.target not in known:
            raise ValueError(f"mask target {mask.target!r} is not a variable "
                             "of the schedule")
        if mesh is not None:
            ty = schedule.var_types.get(mask.target)
            if ty in FORM_TYPES:
                n = FORM_TYPES[ty].dim(mesh)
                if len(mask.indices) and mask.indices.max() >= n:
                    raise ValueError(
                        f"mask index {int(mask.indices.max())} out of range for "
                        f"{mask.target} ({ty}, {n} entries)")
        call = Call("mask", "mask", (mask.target,), mask.target, mask)
        if mask.target in schedule.state_vars:
            calls.insert(0, call)
        elif mask.target in tangent_names:
            calls.append(call)
        else:
            pos = None
            for i, c in enumerate(calls):
                if c.output == mask.target:
                    pos = i
            if pos is None:
                raise ValueError(f"mask target {mask.target!r} is never computed")
            calls.insert(pos + 1, call)

    return Schedule(calls, schedule.state_vars, schedule.tangent_vars,
                    dict(schedule.var_types))


@dataclass
class Kernel:
    """A bound operator implementation.

    signature is ((input type names...), output type name) or None for
    pointwise type-preserving kernels; fn(out, *inputs) writes in place.
    """

    name: str
    arity: int                # -1 for varargs
    fn: object
    signature: tuple = None


def _scalar_kernel(name, program):
    def fn(out, x):
        np.multiply(x, program.params[name], out=out)
    return Kernel(name, 1, fn, None)


def default_registry(mesh, dual=None, variant=dec.DIAGONAL):
    """Kernels for the de Rham operators on a mesh/dual pair.

    Matrices are built lazily on first use so that, e.g., requesting the
    geometric inverse star never pays for it unless a schedule calls it.
    """
    registry = {}

    def lazy_matrix(name, builder):
        sig_dom, sig_cod = OPERATOR_SIGNATURES[name]
        holder = {}

        def fn(out, x):
            if "m" not in holder:
                holder["m"] = builder().matrix
            out[:] = holder["m"] @ x
        registry[name] = Kernel(name, 1, fn, (sig_dom, sig_cod))

    lazy_matrix("d₀", lambda: dec.exterior_derivative(mesh, 0))
    lazy_matrix("d₁", lambda: dec.exterior_derivative(mesh, 1))
    lazy_matrix("d̃₀", lambda: dec.dual_derivative(mesh, 0))
    lazy_matrix("d̃₁", lambda: dec.dual_derivative(mesh, 1))
    if dual is not None:
        lazy_matrix("⋆₀", lambda: dec.hodge_star(dual, 0, variant))
        lazy_matrix("⋆₁", lambda: dec.hodge_star(dual, 1, variant))
        lazy_matrix("⋆₂", lambda: dec.hodge_star(dual, 2, variant))
        lazy_matrix("⋆₀⁻¹", lambda: dec.inverse_hodge_star(dual, 0, variant))
        lazy_matrix("⋆₁⁻¹", lambda: dec.inverse_hodge_star(dual, 1, variant))
        lazy_matrix("⋆₂⁻¹", lambda: dec.inverse_hodge_star(dual, 2, variant))
        lazy_matrix("Δ₀", lambda: dec.laplacian0(mesh, dual, variant))

        def wedge_kernel(name, k, l):
            def fn(out, a, b):
                ca = dec.Cochain(dec.FormType(k), a)
                cb = dec.Cochain(dec.FormType(l), b)
                out[:] = dec.wedge(mesh, dual, k, l, ca, cb).values
            sig = OPERATOR_SIGNATURES[name]
            registry[name] = Kernel(name, 2, fn, sig)

        wedge_kernel("∧₀₀", 0, 0)
        wedge_kernel("∧₀₁", 0, 1)
        wedge_kernel("∧₁₁", 1, 1)

    def neg(out, x):
        np.negative(x, out=out)
    registry["neg"] = Kernel("neg", 1, neg, None)

    def plus(out, *xs):
        out[:] = xs[0]
        for x in xs[1:]:
            out += x
    registry["+"] = Kernel("+", -1, plus, None)
    return registry


class ExecutableProgram:
    """A schedule with kernels bound and buffers pre-sized.

    evaluate(state, params, t) copies the state into internal buffers, runs
    the call list, and returns views of the tangent buffers.  Buffers are
    allocated once at bind time; evaluation reuses them, so one evaluation
    per program may run at a time (use separate programs for concurrency).
    """

    def __init__(self, schedule, buffers, compiled, params, mesh, dual):
        self.schedule = schedule
        self.buffers = buffers
        self.params = params
        self.mesh = mesh
        self.dual = dual
        self._compiled = compiled
        self.state_names = list(schedule.state_vars)
        self.tangent_names = [t for t, _ in schedule.tangent_vars]
        self._state_masks = [c.mask for c in schedule.calls
                             if c.kind == "mask" and c.output in set(self.state_names)]

    def evaluate(self, state, params=None, t=0.0):
        if params:
            self.params.update(params)
        for name in self.state_names:
            self.buffers[name][:] = state[name]
        for fn in self._compiled:
            fn()
        return {name: self.buffers[name] for name in self.tangent_names}

    def apply_state_masks(self, state):
        """Enforce state-variable masks on caller-owned arrays in place."""
        for mask in self._state_masks:
            mask.apply(state[mask.target])
        return state


def bind(schedule, registry, mesh, dual=None, params=None):
    """Resolve operators to kernels and pre-size buffers.

    Unknown operator names that match a declared parameter become scalar
    multiplications; anything else raises MissingBindingError.  Kernel
    signatures are checked against (and refine) the schedule's variable
    types; leftover untyped variables raise BindingTypeError.
    """
    params = dict(params or {})
    var_types = dict(schedule.var_types)
    shape_hints = {}  # form type a Literal parameter is consumed as

    def refine(name, ty):
        cur = var_types.get(name, "Infer")
        if cur == "Literal" and ty in FORM_TYPES:
            prev = shape_hints.get(name, ty)
            if prev != ty:
                raise BindingTypeError(
                    f"parameter {name!r} is used both as {prev} and as {ty}")
            shape_hints[name] = ty
            return
        try:
            new = unify_types(cur, ty)
        except Exception as exc:
            raise BindingTypeError(
                f"variable {name!r} is {cur} but operator needs {ty}") from exc
        var_types[name] = new

    bound = []
    for call in schedule.calls:
        if call.kind == "mask":
            bound.append((call, None))
            continue
        kernel = registry.get(call.operator)
        if kernel is None:
            if var_types.get(call.operator) == "Literal" or call.operator in params:
                kernel = "scalar"
            else:
                raise MissingBindingError(call.operator)
        if kernel != "scalar" and kernel.arity not in (-1, len(call.inputs)):
            raise BindingTypeError(
                f"operator {call.operator!r} takes {kernel.arity} inputs, "
                f"call has {len(call.inputs)}")
        if kernel != "scalar" and kernel.signature is not None:
            dom, cod = kernel.signature
            for name, ty in zip(call.inputs, dom):
                refine(name, ty)
            refine(call.output, cod)
        bound.append((call, kernel))

    # pointwise/scalar/sum kernels preserve types: propagate to fixpoint
    changed = True
    while changed:
        changed = False
        for call, kernel in bound:
            if call.kind == "mask" or (kernel != "scalar" and kernel.signature):
                continue
            members = list(call.inputs) + [call.output]
            concrete = "Infer"
            for m in members:
                ty = var_types.get(m, "Infer")
                if ty not in ("Infer", "Literal"):
                    concrete = unify_types(concrete, ty)
            if concrete != "Infer":
                for m in members:
                    if var_types.get(m) == "Infer":
                        var_types[m] = concrete
                        changed = True

    buffers = {}
    for name, ty in var_types.items():
        if ty in FORM_TYPES:
            buffers[name] = np.zeros(FORM_TYPES[ty].dim(mesh))
    # parameter variables used as data: size from the signature they feed,
    # or directly from an array-valued parameter
    for name, ty in var_types.items():
        if name in buffers or ty != "Literal":
            continue
        if name in shape_hints:
            buffers[name] = np.zeros(FORM_TYPES[shape_hints[name]].dim(mesh))
        elif name in params:
            value = np.asarray(params[name], dtype=np.float64)
            if value.shape != ():
                buffers[name] = value.astype(np.float64).copy()
            # a plain scalar with no typed usage needs no buffer: it can
            # only act as a scalar-multiply operator

    referenced = set()
    for call in schedule.calls:
        referenced.update(call.inputs)
        referenced.add(call.output)
    for name in sorted(referenced):
        if name not in buffers:
            ty = var_types.get(name, "Infer")
            if ty == "Literal":
                raise BindingTypeError(
                    f"parameter {name!r} is used as data but has no value of "
                    "known shape; pass an array or add a type ascription")
            raise BindingTypeError(
                f"cannot size buffer for {name!r}: type is {ty}; add a type "
                "ascription or bind through typed operators")

    # range-check masks now that buffer lengths are known
    for call in schedule.calls:
        if call.kind == "mask":
            n = len(buffers[call.output])
            if len(call.mask.indices) and call.mask.indices.max() >= n:
                raise ValueError(
                    f"mask index {int(call.mask.indices.max())} out of range "
                    f"for {call.output} ({n} entries)")

    prog = ExecutableProgram(schedule, buffers, [], params, mesh, dual)

    compiled = []
    for call, kernel in bound:
        if call.kind == "mask":
            mask, out = call.mask, buffers[call.output]
            compiled.append(lambda mask=mask, out=out: mask.apply(out))
            continue
        if kernel == "scalar":
            kernel = _scalar_kernel(call.operator, prog)
        out = buffers[call.output]
        ins = tuple(buffers[name] for name in call.inputs)
        compiled.append(lambda k=kernel, out=out, ins=ins: k.fn(out, *ins))

    # fill parameter-variable buffers (broadcast scalars)
    for name, value in params.items():
        if name in buffers and name not in prog.state_names:
            arr = np.asarray(value, dtype=np.float64)
            buffers[name][:] = arr

    prog._compiled = compiled
    return prog
