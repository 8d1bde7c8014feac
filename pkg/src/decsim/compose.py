"""Gluing component models along shared variables.

A wiring pattern has boxes with ports, junctions, and wires from ports to
junctions.  Applying it to one open model per box takes the disjoint union
of all tables and identifies the exposed variables wired to each junction.
The merged variable takes the junction's name (or, for unnamed junctions,
the lexicographically least of the identified names); every other variable
is qualified as `box.name` so the union stays collision-free.
"""

import json
from dataclasses import dataclass, field

from .errors import JunctionTypeError, ModelTypeError, PatternError
from .ir import (EquationSystem, Op1Row, Op2Row, SumRow, SummandRow, TVarRow,
                 VarRow, infer_types, unify_types)


@dataclass
class Box:
    name: str
    ports: list


@dataclass
class Wire:
    box: int
    port: int
    junction: int


@dataclass
class WiringPattern:
    boxes: list
    junctions: list          # names; None for unnamed junctions
    wires: list
    outer_ports: list = field(default_factory=list)  # junction indices, documentation

    def check(self):
        seen = set()
        for w in self.wires:
            if not 0 <= w.box < len(self.boxes):
                raise PatternError(f"wire references box {w.box} of {len(self.boxes)}")
            if not 0 <= w.port < len(self.boxes[w.box].ports):
                raise PatternError(
                    f"wire references port {w.port} of box {self.boxes[w.box].name!r}")
            if not 0 <= w.junction < len(self.junctions):
                raise PatternError(f"wire references junction {w.junction}")
            if (w.box, w.port) in seen:
                raise PatternError(
                    f"port {self.boxes[w.box].ports[w.port]!r} of box "
                    f"{self.boxes[w.box].name!r} is wired twice")
            seen.add((w.box, w.port))
        for b, box in enumerate(self.boxes):
            for p in range(len(box.ports)):
                if (b, p) not in seen:
                    raise PatternError(
                        f"port {box.ports[p]!r} of box {box.name!r} is not wired")
        for j in self.outer_ports:
            if not 0 <= j < len(self.junctions):
                raise PatternError(f"outer port references junction {j}")
        return self


@dataclass
class OpenModel:
    """A component system with an ordered list of exposed variable names."""

    system: EquationSystem
    exposed: list

    def __post_init__(self):
        names = self.system.var_names()
        for name in self.exposed:
            if name not in names:
                raise ValueError(f"exposed variable {name!r} not in model")
        if len(set(self.exposed)) != len(self.exposed):
            raise ValueError("exposed variable names must be distinct")


def apply_pattern(pattern, components):
    """Compose open models according to a wiring pattern.

    Raises PatternError on box/port arity mismatches and JunctionTypeError
    when the variables meeting at a junction have incompatible types.
    """
    pattern.check()
    if len(components) != len(pattern.boxes):
        raise PatternError(
            f"pattern has {len(pattern.boxes)} boxes but {len(components)} "
            "components were given")
    for box, comp in zip(pattern.boxes, components):
        if len(comp.exposed) != len(box.ports):
            raise PatternError(
                f"box {box.name!r} has {len(box.ports)} ports but its component "
                f"exposes {len(comp.exposed)} variables")

    # global var ids: offset per component
    offsets = []
    total = 0
    for comp in components:
        offsets.append(total)
        total += len(comp.system.vars)

    # junction classes
    junction_members = [[] for _ in pattern.junctions]
    for w in pattern.wires:
        comp = components[w.box]
        local = comp.system.var_index(comp.exposed[w.port])
        junction_members[w.junction].append(offsets[w.box] + local)

    # resolve merged names and types
    all_vars = []
    for comp in components:
        all_vars.extend(comp.system.vars)

    target = list(range(total))      # var id -> class representative id
    class_name = {}
    class_type = {}
    for j, members in enumerate(junction_members):
        if not members:
            continue
        rep = min(members)  # earliest global id, so remapping is single-pass
        for m in members:
            target[m] = rep
        jname = pattern.junctions[j]
        if jname is None:
            jname = min(all_vars[m].name for m in members)
        ty = "Infer"
        for m in members:
            try:
                ty = unify_types(ty, all_vars[m].type)
            except ModelTypeError as exc:
                raise JunctionTypeError(
                    pattern.junctions[j] or jname,
                    f"type conflict at junction {jname!r}: {exc}") from exc
        class_name[rep] = jname
        class_type[rep] = ty

    # compact to output indices; merged vars keep junction names, the rest
    # are qualified by their box name
    out = EquationSystem()
    remap = {}
    for b, comp in enumerate(components):
        box_name = pattern.boxes[b].name
        for i, v in enumerate(comp.system.vars):
            g = offsets[b] + i
            rep = target[g]
            if rep != g:
                remap[g] = remap[rep]  # representative has the smallest id
                continue
            idx = len(out.vars)
            if g in class_name:
                out.vars.append(VarRow(class_name[g], class_type[g]))
            else:
                out.vars.append(VarRow(f"{box_name}.{v.name}", v.type))
            remap[g] = idx

    for b, comp in enumerate(components):
        off = offsets[b]
        sum_off = len(out.sums)
        for t in comp.system.tvars:
            out.tvars.append(TVarRow(remap[off + t.incl]))
        for op in comp.system.op1s:
            out.op1s.append(Op1Row(remap[off + op.src], remap[off + op.tgt], op.op1))
        for op in comp.system.op2s:
            out.op2s.append(Op2Row(remap[off + op.proj1], remap[off + op.proj2],
                                   remap[off + op.res], op.op2))
        for s in comp.system.sums:
            out.sums.append(SumRow(remap[off + s.sum]))
        for s in comp.system.summands:
            out.summands.append(SummandRow(remap[off + s.summand],
                                           sum_off + s.summation))

    out.check()
    infer_types(out)
    return out


# ---------------------------------------------------------------------------
# serialization

def pattern_to_json_dict(pattern):
    return {
        "boxes": [{"name": b.name, "ports": list(b.ports)} for b in pattern.boxes],
        "junctions": list(pattern.junctions),
        "wires": [{"box": w.box, "port": w.port, "junction": w.junction}
                  for w in pattern.wires],
        "outer_ports": list(pattern.outer_ports),
    }


def pattern_from_json_dict(doc):
    return WiringPattern(
        boxes=[Box(b["name"], list(b["ports"])) for b in doc["boxes"]],
        junctions=list(doc["junctions"]),
        wires=[Wire(w["box"], w["port"], w["junction"]) for w in doc["wires"]],
        outer_ports=list(doc.get("outer_ports", [])),
    ).check()


def load_pattern(path):
    with open(path, "r", encoding="utf-8") as fh:
        return pattern_from_json_dict(json.load(fh))
