"""Discrete exterior calculus operators as sparse matrices.

Conventions
-----------
* d0 row e: -1 at src, +1 at tgt.  d1 row t for ascending triple (i,j,k):
  +1 on (i,j), -1 on (i,k), +1 on (j,k).  d1 @ d0 == 0 holds exactly in
  integer arithmetic.
* Dual derivatives: dual_d0 = +d1^T, dual_d1 = -d0^T.  The minus sign makes
  the 0-form Laplacian inv_star0 @ dual_d1 @ star1 @ d0 negative
  semidefinite, i.e. it approximates the analyst's Laplacian (L sin ~ -2pi^2
  sin on the unit square).  d~ d~ = 0 is unaffected.
* Dual edges are oriented along n = rot90(unit primal edge), so a positive
  star1 entry means flux along the primal edge direction.

Operators are cached per mesh/dual object (weak references, single-writer
lock); matrices are immutable once built and safe to share across threads.
"""

import threading
from dataclasses import dataclass
from weakref import WeakKeyDictionary

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite

from .errors import InvalidDegreeError, SingularOperatorError
from .mesh import BARYCENTRIC

DIAGONAL = "diagonal"
GEOMETRIC = "geometric"


@dataclass(frozen=True)
class FormType:
    """Degree and primality of a discrete form."""

    degree: int
    dual: bool = False

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise InvalidDegreeError(f"form degree must be 0, 1 or 2, got {self.degree}")

    @property
    def name(self):
        return ("DualForm" if self.dual else "Form") + str(self.degree)

    def dim(self, mesh):
        """Number of values a cochain of this type carries on `mesh`."""
        k = 2 - self.degree if self.dual else self.degree
        return (mesh.n_vertices, mesh.n_edges, mesh.n_triangles)[k]


FORM_TYPES = {
    "Form0": FormType(0), "Form1": FormType(1), "Form2": FormType(2),
    "DualForm0": FormType(0, True), "DualForm1": FormType(1, True),
    "DualForm2": FormType(2, True),
}


@dataclass
class Cochain:
    """A discrete k-form: a value per k-simplex (primal) or per dual cell."""

    form: FormType
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("cochain values must be a flat vector")

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.form.name} cochain contains non-finite values")


@dataclass
class OperatorMatrix:
    """A sparse linear operator between typed form spaces."""

    domain: FormType
    codomain: FormType
    matrix: sp.csr_matrix

    def apply(self, cochain):
        if cochain.form != self.domain:
            raise ValueError(
                f"operator expects {self.domain.name}, got {cochain.form.name}"
            )
        if len(cochain.values) != self.matrix.shape[1]:
            raise ValueError(
                f"cochain length {len(cochain.values)} does not match operator "
                f"domain dimension {self.matrix.shape[1]}"
            )
        return Cochain(self.codomain, self.matrix @ cochain.values)


_CACHE = WeakKeyDictionary()
_CACHE_LOCK = threading.Lock()


def _cached(owner, key, builder):
    entry = _CACHE.get(owner)
    if entry is not None and key in entry:
        return entry[key]
    value = builder()
    with _CACHE_LOCK:
        entry = _CACHE.setdefault(owner, {})
        return entry.setdefault(key, value)


def exterior_derivative(mesh, k):
    """Signed incidence matrix d_k of the primal complex."""
    if k not in (0, 1):
        raise InvalidDegreeError(f"exterior derivative defined for k in {{0, 1}}, got {k}")
    return _cached(mesh, ("d", k), lambda: _build_d(mesh, k))


def _build_d(mesh, k):
    if k == 0:
        e = mesh.n_edges
        rows = np.repeat(np.arange(e), 2)
        cols = mesh.edges.ravel()
        data = np.tile([-1.0, 1.0], e)
        m = sp.csr_matrix((data, (rows, cols)), shape=(e, mesh.n_vertices))
        return OperatorMatrix(FormType(0), FormType(1), m)
    t = mesh.n_triangles
    rows = np.repeat(np.arange(t), 3)
    cols = mesh.triangle_edges.ravel()
    # boundary of the CCW relabeling of (i,j,k): the combinatorial signs
    # +(i,j) -(i,k) +(j,k) times the stored triple's plane orientation
    data = (mesh.triangle_orientations[:, None] * np.array([1.0, -1.0, 1.0])).ravel()
    m = sp.csr_matrix((data, (rows, cols)), shape=(t, mesh.n_edges))
    return OperatorMatrix(FormType(1), FormType(2), m)


def dual_derivative(mesh, k):
    """Derivative on the dual complex: d~0 = +d1^T, d~1 = -d0^T."""
    if k not in (0, 1):
        raise InvalidDegreeError(f"dual derivative defined for k in {{0, 1}}, got {k}")

    def build():
        if k == 0:
            m = exterior_derivative(mesh, 1).matrix.T.tocsr()
            return OperatorMatrix(FormType(0, True), FormType(1, True), m)
        m = (-exterior_derivative(mesh, 0).matrix.T).tocsr()
        return OperatorMatrix(FormType(1, True), FormType(2, True), m)

    return _cached(mesh, ("dual_d", k), build)


def hodge_star(dual, k, variant=DIAGONAL):
    """Hodge star from primal k-forms to dual (2-k)-forms.

    Diagonal entries are the measure ratios |dual cell| / |primal cell|.
    The geometric variant (k = 1 only; other degrees coincide with the
    diagonal) accounts for dual edges that are not orthogonal to their
    primal edges, as barycentric duals generally are not:

        (star1 a)[e] = sum over triangles t containing e of
            (g . n) a[e]/|e|  -  (g . u) (n . W_t(a))

    where u is the unit vector along e, n = rot90(u), g is the dual-edge
    segment center(t) - midpoint(e) oriented so g . n >= 0, and W_t(a) is
    the Whitney (piecewise-linear) vector reconstruction of `a` evaluated at
    the triangle center.  For gradients of vertex functions this integrates
    the rotated reconstructed gradient exactly along the dual polyline, and
    it reduces to the diagonal star whenever g is parallel to n.
    """
    if k not in (0, 1, 2):
        raise InvalidDegreeError(f"hodge star defined for k in {{0, 1, 2}}, got {k}")
    if variant not in (DIAGONAL, GEOMETRIC):
        raise ValueError(f"unknown hodge variant {variant!r}")
    if variant == GEOMETRIC and k != 1:
        variant = DIAGONAL  # geometric correction only exists for 1-forms

    def build():
        if variant == GEOMETRIC:
            return _build_geometric_star1(dual)
        if k == 0:
            diag = dual.dual_cell_areas
            dom, cod = FormType(0), FormType(2, True)
        elif k == 1:
            diag = dual.dual_edge_lengths / dual.primal_edge_lengths
            dom, cod = FormType(1), FormType(1, True)
        else:
            diag = 1.0 / dual.triangle_areas
            dom, cod = FormType(2), FormType(0, True)
        return OperatorMatrix(dom, cod, sp.csr_matrix(sp.diags(diag)))

    return _cached(dual, ("star", k, variant), build)


def _planar_coords(vertices):
    if vertices.shape[1] == 2:
        return vertices
    if np.ptp(vertices[:, 2]) == 0.0:
        return vertices[:, :2]
    raise ValueError("geometric hodge star requires a planar mesh")


def _build_geometric_star1(dual):
    mesh = dual.mesh
    verts = _planar_coords(mesh.vertices)
    tri = mesh.triangles
    te = mesh.triangle_edges
    nt = mesh.n_triangles

    pa, pb, pc = verts[tri[:, 0]], verts[tri[:, 1]], verts[tri[:, 2]]
    signed2 = ((pb[:, 0] - pa[:, 0]) * (pc[:, 1] - pa[:, 1])
               - (pb[:, 1] - pa[:, 1]) * (pc[:, 0] - pa[:, 0]))  # 2 * signed area

    def rot90(v):
        return np.column_stack([-v[:, 1], v[:, 0]])

    # barycentric-coordinate gradients; signed area keeps this valid for
    # either storage orientation
    grad = np.empty((nt, 3, 2))
    grad[:, 0] = rot90(pc - pb) / signed2[:, None]
    grad[:, 1] = rot90(pa - pc) / signed2[:, None]
    grad[:, 2] = rot90(pb - pa) / signed2[:, None]

    # Whitney 1-form basis at the barycenter for sides (i,j), (i,k), (j,k):
    # W_(a,b) = (grad_b - grad_a) / 3 with canonical src < tgt orientation
    whitney = np.empty((nt, 3, 2))
    whitney[:, 0] = (grad[:, 1] - grad[:, 0]) / 3.0
    whitney[:, 1] = (grad[:, 2] - grad[:, 0]) / 3.0
    whitney[:, 2] = (grad[:, 2] - grad[:, 1]) / 3.0

    centers = _planar_coords(dual.dual_vertex_positions)
    midpoints = 0.5 * (verts[mesh.edges[:, 0]] + verts[mesh.edges[:, 1]])
    evec = verts[mesh.edges[:, 1]] - verts[mesh.edges[:, 0]]
    elen = dual.primal_edge_lengths
    unit = evec / elen[:, None]
    normal = rot90(unit)

    rows, cols, data = [], [], []
    for side in range(3):
        e = te[:, side]                       # (T,) edge ids
        g = centers - midpoints[e]            # (T, 2)
        gn = np.sum(g * normal[e], axis=1)
        sign = np.where(gn >= 0, 1.0, -1.0)
        gn = gn * sign
        gu = np.sum(g * unit[e], axis=1) * sign
        # along-normal part from the edge's own value
        rows.append(e)
        cols.append(e)
        data.append(gn / elen[e])
        # transverse part from the Whitney reconstruction of all three sides
        for other in range(3):
            wn = np.sum(whitney[:, other] * normal[e], axis=1)
            rows.append(e)
            cols.append(te[:, other])
            data.append(-gu * wn)

    m = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_edges, mesh.n_edges),
    )
    m.sum_duplicates()
    return OperatorMatrix(FormType(1), FormType(1, True), m)


def inverse_hodge_star(dual, k, variant=DIAGONAL):
    """Inverse of the corresponding hodge_star.

    Diagonal stars invert entrywise; the geometric star1 is inverted by a
    sparse LU factorization (the result is stored dense-in-sparse, intended
    for desk-scale meshes).
    """
    forward = hodge_star(dual, k, variant)

    def build():
        m = forward.matrix
        if variant == GEOMETRIC and k == 1:
            try:
                lu = spla.splu(m.tocsc())
                inv = lu.solve(np.eye(m.shape[0]))
            except RuntimeError as exc:
                raise SingularOperatorError(f"geometric star1 is singular: {exc}") from exc
            inv_m = sp.csr_matrix(inv)
        else:
            diag = m.diagonal()
            if np.any(diag == 0.0):
                raise SingularOperatorError(
                    f"hodge star {k} has zero entries and cannot be inverted"
                )
            inv_m = sp.csr_matrix(sp.diags(1.0 / diag))
        return OperatorMatrix(forward.codomain, forward.domain, inv_m)

    return _cached(dual, ("inv_star", k, variant), build)


def laplacian0(mesh, dual, variant=DIAGONAL):
    """0-form Laplacian inv_star0 . dual_d1 . star1 . d0 (single sparse matrix)."""

    def build():
        m = (inverse_hodge_star(dual, 0, variant).matrix
             @ dual_derivative(mesh, 1).matrix
             @ hodge_star(dual, 1, variant).matrix
             @ exterior_derivative(mesh, 0).matrix)
        return OperatorMatrix(FormType(0), FormType(0), sp.csr_matrix(m))

    return _cached(dual, ("lap0", variant), build)


def wedge(mesh, dual, k, l, a, b):
    """Primal-primal wedge product of a k-form and an l-form, k + l <= 2.

    wedge(0,0) is the pointwise product; wedge(0,1) averages the 0-form over
    the edge endpoints; wedge(1,1) is the antisymmetrized cyclic pair sum
    (1/6) sum_cyc (a_m b_m+1 - a_m+1 b_m) over each triangle's boundary
    cycle, which is exact for constant 1-forms.
    """
    if k not in (0, 1) or l not in (0, 1) or k + l > 2:
        raise InvalidDegreeError(f"unsupported wedge degrees ({k}, {l})")
    if a.form != FormType(k) or b.form != FormType(l):
        raise InvalidDegreeError(
            f"wedge({k},{l}) got cochains of type {a.form.name}, {b.form.name}"
        )

    if k == 0 and l == 0:
        return Cochain(FormType(0), a.values * b.values)
    if k == 0 and l == 1:
        avg = 0.5 * (a.values[mesh.edges[:, 0]] + a.values[mesh.edges[:, 1]])
        return Cochain(FormType(1), avg * b.values)
    if k == 1 and l == 0:
        avg = 0.5 * (b.values[mesh.edges[:, 0]] + b.values[mesh.edges[:, 1]])
        return Cochain(FormType(1), avg * a.values)

    te = mesh.triangle_edges
    # boundary-cycle oriented values: (i,j), (j,k), then (k,i) = -(i,k);
    # the orientation sign switches the cycle to the CCW relabeling
    a1, a2, a3 = a.values[te[:, 0]], a.values[te[:, 2]], -a.values[te[:, 1]]
    b1, b2, b3 = b.values[te[:, 0]], b.values[te[:, 2]], -b.values[te[:, 1]]
    out = (a1 * b2 - a2 * b1 + a2 * b3 - a3 * b2 + a3 * b1 - a1 * b3) / 6.0
    return Cochain(FormType(2), mesh.triangle_orientations * out)


def flat(mesh, dual, vector_field):
    """Per-triangle vectors to a primal 1-form.

    The value on edge e averages the incident triangles' tangential
    components, weighted by each triangle's share of the dual edge, then
    scales by the primal edge length.  Constant fields X come out as the
    exact line integral X . (tgt - src).
    """
    vf = np.asarray(vector_field, dtype=np.float64)
    if vf.shape != (mesh.n_triangles, mesh.vertices.shape[1]):
        raise ValueError(
            f"expected one {mesh.vertices.shape[1]}-vector per triangle "
            f"({mesh.n_triangles}), got shape {vf.shape}"
        )
    evec = mesh.edge_vectors()
    out = np.zeros(mesh.n_edges)
    for side in range(3):
        e = mesh.triangle_edges[:, side]
        w = dual.dual_segment_lengths[:, side] / dual.dual_edge_lengths[e]
        np.add.at(out, e, w * np.sum(vf * evec[e], axis=1))
    return Cochain(FormType(1), out)


def write_matrix_market(operator, path):
    """Dump an OperatorMatrix in Matrix Market coordinate format."""
    mmwrite(str(path), operator.matrix)
