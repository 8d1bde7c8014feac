import numpy as np
import pytest

from decsim import (Box, OpenModel, Wire, WiringPattern, apply_pattern,
                    is_isomorphic, pattern_from_json_dict, pattern_to_json_dict,
                    validate)
from decsim.errors import JunctionTypeError, PatternError
from decsim.parser import parse_equations

DIFFUSION = "param k\n∂ₜ(C) == ⋆₀⁻¹(d̃₁(⋆₁(k(d₀(C)))))"


def four_components():
    return [
        OpenModel(parse_equations("ϕ == k∇(T)"), ["T", "ϕ"]),
        OpenModel(parse_equations("param V\nϕ == ∧₀₁(T, V)"), ["T", "ϕ"]),
        OpenModel(parse_equations("∂ₜ(X) == ∇⋅(ϕ)"), ["X", "ϕ"]),
        OpenModel(parse_equations("ϕ == sum(ϕ₁, ϕ₂)"), ["ϕ", "ϕ₁", "ϕ₂"]),
    ]


def adv_diff_pattern():
    return WiringPattern(
        boxes=[Box("diffusion", ["T", "ϕ"]), Box("advection", ["T", "ϕ"]),
               Box("conservation", ["X", "ϕ"]),
               Box("superposition", ["ϕ", "ϕ₁", "ϕ₂"])],
        junctions=["T", "ϕ₁", "ϕ₂", "ϕ"],
        wires=[Wire(0, 0, 0), Wire(0, 1, 1), Wire(1, 0, 0), Wire(1, 1, 2),
               Wire(2, 0, 0), Wire(2, 1, 3), Wire(3, 0, 3), Wire(3, 1, 1),
               Wire(3, 2, 2)],
        outer_ports=[0, 3])


EXPECTED_COMPOSITE = """param V
ϕ₁ == k∇(T)
ϕ₂ == ∧₀₁(T, V)
ϕ == sum(ϕ₁, ϕ₂)
∂ₜ(T) == ∇⋅(ϕ)
"""


def test_advection_diffusion_composite():
    composite = apply_pattern(adv_diff_pattern(), four_components())
    names = composite.var_names()
    assert len(composite.vars) == 6
    for junction_name in ("T", "ϕ", "ϕ₁", "ϕ₂"):
        assert names.count(junction_name) == 1
    assert len(composite.tvars) == 1
    assert sum(1 for o in composite.op1s if o.op1 == "∂ₜ") == 1
    assert len(composite.sums) == 1 and len(composite.summands) == 2
    expected = parse_equations(EXPECTED_COMPOSITE)
    assert is_isomorphic(composite, expected)


def test_identity_pattern_isomorphic():
    fick = OpenModel(parse_equations("ϕ == k∇(T)"), ["T", "ϕ"])
    ident = WiringPattern(boxes=[Box("b", ["T", "ϕ"])], junctions=[None, None],
                          wires=[Wire(0, 0, 0), Wire(0, 1, 1)])
    out = apply_pattern(ident, [fick])
    assert is_isomorphic(out, fick.system, match_names=True)


def test_two_diffusions_glued_rule2_downstream():
    comps = [OpenModel(parse_equations(DIFFUSION), ["C"]) for _ in range(2)]
    pattern = WiringPattern(boxes=[Box("a", ["C"]), Box("b", ["C"])],
                            junctions=["C"], wires=[Wire(0, 0, 0), Wire(1, 0, 0)])
    glued = apply_pattern(pattern, comps)
    assert len(glued.vars) == 7 + 7 - 1
    rep = validate(glued, ["C"])
    assert any(v.rule == 2 and "2 time derivatives" in v.message
               for v in rep.violations)


def test_var_count_formula_randomized():
    rng = np.random.default_rng(11)
    for trial in range(40):
        n_boxes = int(rng.integers(1, 5))
        comps, boxes = [], []
        for b in range(n_boxes):
            n_vars = int(rng.integers(1, 5))
            names = [f"x{b}_{i}" for i in range(n_vars)]
            src = "\n".join(f"{n} :: Form0" for n in names)
            system = parse_equations(src)
            n_ports = int(rng.integers(0, n_vars + 1))
            exposed = list(rng.choice(names, size=n_ports, replace=False))
            comps.append(OpenModel(system, exposed))
            boxes.append(Box(f"b{b}", list(exposed)))
        n_junctions = int(rng.integers(1, 6))
        junctions = [f"j{i}" for i in range(n_junctions)]
        wires = []
        for b, box in enumerate(boxes):
            for p in range(len(box.ports)):
                wires.append(Wire(b, p, int(rng.integers(0, n_junctions))))
        pattern = WiringPattern(boxes, junctions, wires)
        out = apply_pattern(pattern, comps)
        degree = np.bincount([w.junction for w in wires], minlength=n_junctions) \
            if wires else np.zeros(n_junctions, dtype=int)
        expected = sum(len(c.system.vars) for c in comps) \
            - int(np.maximum(degree - 1, 0).sum())
        assert len(out.vars) == expected, f"trial {trial}"


def test_permutation_invariance():
    comps = four_components()
    pattern = adv_diff_pattern()
    base = apply_pattern(pattern, comps)
    perm = [2, 0, 3, 1]
    boxes = [pattern.boxes[p] for p in perm]
    remap = {old: new for new, old in enumerate(perm)}
    wires = [Wire(remap[w.box], w.port, w.junction) for w in pattern.wires]
    shuffled = WiringPattern(boxes, pattern.junctions, wires, pattern.outer_ports)
    out = apply_pattern(shuffled, [comps[p] for p in perm])
    assert is_isomorphic(base, out)


def test_nested_composition_associative():
    a = OpenModel(parse_equations("b == f(a)"), ["b"])
    b = OpenModel(parse_equations("c == g(b)"), ["b", "c"])
    c = OpenModel(parse_equations("d == h(c)"), ["c"])

    one_shot = apply_pattern(WiringPattern(
        boxes=[Box("A", ["b"]), Box("B", ["b", "c"]), Box("C", ["c"])],
        junctions=["b", "c"],
        wires=[Wire(0, 0, 0), Wire(1, 0, 0), Wire(1, 1, 1), Wire(2, 0, 1)]),
        [a, b, c])

    ab = apply_pattern(WiringPattern(
        boxes=[Box("A", ["b"]), Box("B", ["b", "c"])], junctions=["b", "c"],
        wires=[Wire(0, 0, 0), Wire(1, 0, 0), Wire(1, 1, 1)]), [a, b])
    left = apply_pattern(WiringPattern(
        boxes=[Box("AB", ["c"]), Box("C", ["c"])], junctions=["c"],
        wires=[Wire(0, 0, 0), Wire(1, 0, 0)]),
        [OpenModel(ab, ["c"]), c])

    bc = apply_pattern(WiringPattern(
        boxes=[Box("B", ["b", "c"]), Box("C", ["c"])], junctions=["b", "c"],
        wires=[Wire(0, 0, 0), Wire(0, 1, 1), Wire(1, 0, 1)]), [b, c])
    right = apply_pattern(WiringPattern(
        boxes=[Box("A", ["b"]), Box("BC", ["b"])], junctions=["b"],
        wires=[Wire(0, 0, 0), Wire(1, 0, 0)]),
        [a, OpenModel(bc, ["b"])])

    assert is_isomorphic(one_shot, left)
    assert is_isomorphic(one_shot, right)


def test_arity_mismatch_rejected():
    fick = OpenModel(parse_equations("ϕ == k∇(T)"), ["T"])
    pattern = WiringPattern(boxes=[Box("b", ["T", "ϕ"])], junctions=["T", "ϕ"],
                            wires=[Wire(0, 0, 0), Wire(0, 1, 1)])
    with pytest.raises(PatternError):
        apply_pattern(pattern, [fick])


def test_component_count_mismatch():
    with pytest.raises(PatternError):
        apply_pattern(adv_diff_pattern(), four_components()[:2])


def test_unwired_port_rejected():
    pattern = WiringPattern(boxes=[Box("b", ["T", "ϕ"])], junctions=["T"],
                            wires=[Wire(0, 0, 0)])
    with pytest.raises(PatternError):
        pattern.check()


def test_junction_type_conflict():
    a = OpenModel(parse_equations("x :: Form0\ny == f(x)"), ["x"])
    b = OpenModel(parse_equations("x :: Form1\ny == g(x)"), ["x"])
    pattern = WiringPattern(boxes=[Box("a", ["x"]), Box("b", ["x"])],
                            junctions=["shared"],
                            wires=[Wire(0, 0, 0), Wire(1, 0, 0)])
    with pytest.raises(JunctionTypeError) as exc:
        apply_pattern(pattern, [a, b])
    assert "shared" in str(exc.value)


def test_unnamed_junction_takes_least_name():
    a = OpenModel(parse_equations("z == f(m)"), ["m"])
    b = OpenModel(parse_equations("w == g(b)"), ["b"])
    pattern = WiringPattern(boxes=[Box("a", ["m"]), Box("b", ["b"])],
                            junctions=[None], wires=[Wire(0, 0, 0), Wire(1, 0, 0)])
    out = apply_pattern(pattern, [a, b])
    assert "b" in out.var_names()  # lexicographically least of {m, b}


def test_pattern_json_round_trip():
    pattern = adv_diff_pattern()
    doc = pattern_to_json_dict(pattern)
    back = pattern_from_json_dict(doc)
    assert pattern_to_json_dict(back) == doc
