"""Triangle meshes and their dual complexes.

The primal mesh is a 2-D triangulation with canonically oriented storage:
edges are (src, tgt) with src < tgt, triangles are ascending index triples.
Orientation information lives entirely in the incidence signs built by
:mod:`decsim.dec`, so canonical storage never loses anything.

The dual complex places one point per triangle (barycenter or circumcenter)
and derives all geometric measures from it.  Boundary dual cells are clipped
at the boundary: the dual edge of a boundary primal edge has a single
segment, and dual cell areas always partition the total surface exactly.
"""

import numpy as np

from .errors import MalformedInputError, MeshFormatError, NotWellCenteredError

BARYCENTRIC = "barycentric"
CIRCUMCENTRIC = "circumcentric"


class TriMesh:
    """Immutable 2-D simplicial mesh with derived edge structure.

    Parameters
    ----------
    vertices : (V, 2) or (V, 3) float array
        Vertex coordinates. 3-D coordinates are used verbatim.
    triangles : (T, 3) int array
        Vertex index triples; stored sorted ascending per row.

    Edges are derived from the triangles, deduplicated and stored with
    src < tgt in lexicographic order.
    """

    def __init__(self, vertices, triangles):
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise ValueError("vertices must be (V, 2) or (V, 3)")
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MalformedInputError("triangle vertex index out of range")
        if triangles.size:
            spans = np.sort(triangles, axis=1)
            if np.any(spans[:, 0] == spans[:, 1]) or np.any(spans[:, 1] == spans[:, 2]):
                raise MalformedInputError("triangle with repeated vertex")
            triangles = spans

        self.vertices = vertices
        self.triangles = triangles

        sides = np.concatenate(
            [triangles[:, [0, 1]], triangles[:, [0, 2]], triangles[:, [1, 2]]]
        ) if triangles.size else np.empty((0, 2), dtype=np.int64)
        edges, inverse = np.unique(sides, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)  # numpy 2.x keeps axis-unique inverse 1-D; be explicit
        self.edges = edges
        # triangle_edges[t] = edge ids of sides (i,j), (i,k), (j,k)
        self.triangle_edges = (
            inverse.reshape(3, -1).T.copy() if triangles.size else np.empty((0, 3), dtype=np.int64)
        )

        counts = np.bincount(self.triangle_edges.ravel(), minlength=len(edges)) if triangles.size else np.zeros(len(edges), dtype=np.int64)
        self.boundary_edge_flags = counts == 1
        self.boundary_vertex_flags = np.zeros(len(vertices), dtype=bool)
        if len(edges):
            self.boundary_vertex_flags[edges[self.boundary_edge_flags].ravel()] = True

        # orientation of each stored (ascending) triple relative to the
        # counterclockwise relabeling; +1 in 3-D where no plane orientation
        # exists
        if triangles.size and vertices.shape[1] == 2:
            a = vertices[triangles[:, 0]]
            b = vertices[triangles[:, 1]]
            c = vertices[triangles[:, 2]]
            cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) \
                - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
            self.triangle_orientations = np.where(cross < 0, -1.0, 1.0)
        else:
            self.triangle_orientations = np.ones(len(triangles))

        # edge_triangles[e] = up to two incident triangle ids, -1 padded,
        # ascending triangle index.
        self.edge_triangles = np.full((len(edges), 2), -1, dtype=np.int64)
        slot = np.zeros(len(edges), dtype=np.int64)
        for t in range(len(triangles)):
            for e in self.triangle_edges[t]:
                if slot[e] > 1:
                    raise MalformedInputError(f"edge {e} shared by more than two triangles")
                self.edge_triangles[e, slot[e]] = t
                slot[e] += 1

        for a in (self.vertices, self.triangles, self.edges, self.triangle_edges,
                  self.boundary_edge_flags, self.boundary_vertex_flags,
                  self.edge_triangles, self.triangle_orientations):
            a.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def edge_vectors(self):
        """(E, D) array of tgt - src coordinates."""
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    def edge_lengths(self):
        return np.linalg.norm(self.edge_vectors(), axis=1)

    def check(self):
        """Scan-test the storage invariants; raises AssertionError on failure."""
        assert np.all(self.edges[:, 0] < self.edges[:, 1]), "edge not src < tgt"
        assert np.all(np.diff(self.triangles, axis=1) > 0), "triangle not ascending"
        assert len(np.unique(self.edges, axis=0)) == len(self.edges), "duplicate edge"
        for t in range(self.n_triangles):
            i, j, k = self.triangles[t]
            for pair, e in zip(((i, j), (i, k), (j, k)), self.triangle_edges[t]):
                assert tuple(self.edges[e]) == pair, "side missing from edge list"
        counts = np.bincount(self.triangle_edges.ravel(), minlength=self.n_edges) \
            if self.n_triangles else np.zeros(self.n_edges)
        assert np.array_equal(self.boundary_edge_flags, counts == 1)
        assert np.all(_triangle_areas(self.vertices, self.triangles) > 0), \
            "degenerate triangle"
        return True


def _triangle_areas(vertices, triangles):
    if len(triangles) == 0:
        return np.zeros(0)
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * _cross_norm(b - a, c - a)


def _cross_norm(u, v):
    """|u x v| for batched 2-D or 3-D vectors."""
    if u.shape[1] == 2:
        return np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    return np.linalg.norm(np.cross(u, v), axis=1)


def generate_grid(nx, ny, lx=1.0, ly=1.0):
    """Structured triangulation of [0, lx] x [0, ly].

    Each of the nx*ny cells is split along its lower-left to upper-right
    diagonal, giving (nx+1)(ny+1) vertices and 2*nx*ny triangles.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"grid needs nx >= 1 and ny >= 1, got {nx} x {ny}")
    if lx <= 0 or ly <= 0:
        raise ValueError(f"domain lengths must be positive, got {lx} x {ly}")

    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    a = (jj * (nx + 1) + ii).ravel()
    b = a + 1
    c = a + nx + 1
    d = c + 1
    tris = np.concatenate([np.column_stack([a, b, d]), np.column_stack([a, c, d])])
    return TriMesh(vertices, tris)


def load_obj(path):
    """Read the `v x y [z]` / `f i j k` OBJ subset into a mesh.

    `vt`/`vn` and other record types are ignored.  Faces must be triangles;
    `f` entries may carry `/`-separated texture/normal refs, only the vertex
    index is used (1-based).
    """
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            tag, rest = parts[0], parts[1:]
            if tag == "v":
                if len(rest) not in (2, 3):
                    raise MalformedInputError(
                        f"{path}:{lineno}: vertex needs 2 or 3 coordinates"
                    )
                try:
                    vertices.append([float(x) for x in rest])
                except ValueError as exc:
                    raise MalformedInputError(f"{path}:{lineno}: bad coordinate") from exc
            elif tag == "f":
                if len(rest) != 3:
                    raise MeshFormatError(
                        f"{path}:{lineno}: only triangular faces are supported "
                        f"(face has {len(rest)} vertices)"
                    )
                idx = []
                for token in rest:
                    head = token.split("/", 1)[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise MalformedInputError(f"{path}:{lineno}: bad face index") from exc
                    if i < 1:
                        raise MalformedInputError(
                            f"{path}:{lineno}: face indices must be positive (1-based)"
                        )
                    idx.append(i - 1)
                faces.append(idx)
            # everything else (vt, vn, o, g, s, mtllib, usemtl) is ignored

    if not vertices:
        raise MalformedInputError(f"{path}: no vertices")
    verts = np.array(vertices, dtype=np.float64)
    if verts.shape[1] == 3 and np.all(verts[:, 2] == 0.0):
        verts = verts[:, :2]
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and faces.max() >= len(verts):
        raise MalformedInputError(f"{path}: face references vertex {faces.max() + 1} "
                                  f"but only {len(verts)} vertices are defined")
    return TriMesh(verts, faces)


def save_obj(mesh, path):
    """Write the mesh back out in the same OBJ subset, bit-stably.

    Coordinates use 17 significant digits so a load_obj round trip
    reproduces the float64 values exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write("v " + " ".join(f"{x:.17g}" for x in v) + "\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


class DualMesh:
    """Geometric measures of a dual complex over a TriMesh.

    Attributes
    ----------
    dual_vertex_positions : (T, D) array, one point per triangle
    dual_edge_lengths : (E,) polyline length of each primal edge's dual edge
    dual_cell_areas : (V,) area of each primal vertex's dual region
    primal_edge_lengths : (E,)
    triangle_areas : (T,)
    subdivision : "barycentric" or "circumcentric"
    dual_segment_lengths : (T, 3) per-triangle segment of each side's dual edge
    """

    def __init__(self, mesh, subdivision, dual_vertex_positions, dual_edge_lengths,
                 dual_cell_areas, primal_edge_lengths, triangle_areas,
                 dual_segment_lengths):
        self.mesh = mesh
        self.subdivision = subdivision
        self.dual_vertex_positions = dual_vertex_positions
        self.dual_edge_lengths = dual_edge_lengths
        self.dual_cell_areas = dual_cell_areas
        self.primal_edge_lengths = primal_edge_lengths
        self.triangle_areas = triangle_areas
        self.dual_segment_lengths = dual_segment_lengths
        for a in (dual_vertex_positions, dual_edge_lengths, dual_cell_areas,
                  primal_edge_lengths, triangle_areas, dual_segment_lengths):
            a.setflags(write=False)


def _circumcenters(mesh):
    """Circumcenters via the squared-edge-length barycentric weights.

    Valid in any ambient dimension; callers must have checked acuteness.
    """
    A = mesh.vertices[mesh.triangles[:, 0]]
    B = mesh.vertices[mesh.triangles[:, 1]]
    C = mesh.vertices[mesh.triangles[:, 2]]
    a2 = np.sum((B - C) ** 2, axis=1)
    b2 = np.sum((C - A) ** 2, axis=1)
    c2 = np.sum((A - B) ** 2, axis=1)
    wa = a2 * (b2 + c2 - a2)
    wb = b2 * (c2 + a2 - b2)
    wc = c2 * (a2 + b2 - c2)
    w = (wa + wb + wc)[:, None]
    return (wa[:, None] * A + wb[:, None] * B + wc[:, None] * C) / w


def build_dual(mesh, subdivision=BARYCENTRIC):
    """Construct the dual complex and all its measures.

    Barycentric duals are always well-centered.  Circumcentric duals demand
    strictly acute triangles; the first offending triangle is reported.
    """
    if subdivision not in (BARYCENTRIC, CIRCUMCENTRIC):
        raise ValueError(f"unknown subdivision {subdivision!r}")
    if mesh.n_triangles == 0:
        zeros_e = np.zeros(mesh.n_edges)
        return DualMesh(mesh, subdivision,
                        np.zeros((0, mesh.vertices.shape[1])), zeros_e,
                        np.zeros(mesh.n_vertices), mesh.edge_lengths(),
                        np.zeros(0), np.zeros((0, 3)))

    areas = _triangle_areas(mesh.vertices, mesh.triangles)
    if np.any(areas <= 0):
        raise ValueError(f"degenerate triangle {int(np.argmin(areas))} (zero area)")

    tri = mesh.triangles
    pa = mesh.vertices[tri[:, 0]]
    pb = mesh.vertices[tri[:, 1]]
    pc = mesh.vertices[tri[:, 2]]

    if subdivision == CIRCUMCENTRIC:
        # strictly acute check: every corner's adjacent edge vectors must
        # have positive dot product (a right angle gives exactly zero)
        dots = np.minimum.reduce([
            np.sum((pb - pa) * (pc - pa), axis=1),
            np.sum((pa - pb) * (pc - pb), axis=1),
            np.sum((pa - pc) * (pb - pc), axis=1),
        ])
        bad = np.nonzero(dots <= 0)[0]
        if len(bad):
            raise NotWellCenteredError(int(bad[0]))
        centers = _circumcenters(mesh)
    else:
        centers = (pa + pb + pc) / 3.0

    edge_lengths = mesh.edge_lengths()
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])

    # per-triangle dual edge segments: center -> midpoint of each side
    seg = centers[:, None, :] - midpoints[mesh.triangle_edges]      # (T, 3, D)
    seg_len = np.linalg.norm(seg, axis=2)                           # (T, 3)
    dual_edge_lengths = np.zeros(mesh.n_edges)
    np.add.at(dual_edge_lengths, mesh.triangle_edges.ravel(), seg_len.ravel())

    # dual cell region of corner v inside a triangle is the quad
    # (v, midpoint(v, u1), center, midpoint(v, u2)); its area is the sum of
    # the two triangles the center splits it into
    # adjacent triangle_edges columns per corner: vertex i touches sides
    # (i,j), (i,k); vertex j touches (i,j), (j,k); vertex k touches (i,k), (j,k)
    corner_cols = ((0, 1), (0, 2), (1, 2))
    dual_cell_areas = np.zeros(mesh.n_vertices)
    corner_pts = (pa, pb, pc)
    for corner in range(3):
        c1, c2 = corner_cols[corner]
        m1 = midpoints[mesh.triangle_edges[:, c1]]
        m2 = midpoints[mesh.triangle_edges[:, c2]]
        p = corner_pts[corner]
        quad = 0.5 * (_cross_norm(m1 - p, centers - p) + _cross_norm(centers - p, m2 - p))
        np.add.at(dual_cell_areas, tri[:, corner], quad)

    return DualMesh(mesh, subdivision, centers, dual_edge_lengths,
                    dual_cell_areas, edge_lengths, areas, seg_len)
