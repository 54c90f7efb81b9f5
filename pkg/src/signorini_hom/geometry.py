"""Unit cell with a rectangular inclusion and its ε-tiling of the unit square.

Meshes are structured "union-jack" triangulations (alternating diagonals), so
the triangulation is invariant under the reflections of the square and the
interface Γ always runs along mesh edges.  Nodes on Γ are duplicated: one copy
belongs to the matrix (component 1), the other to the inclusion (component 2).
"""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .kernels import p1_gradients


class ResolutionError(ValueError):
    """Raised when the interface cannot be aligned with mesh edges."""


def _as_fraction(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(str(v)).limit_denominator(10**6)


def cells_per_side(epsilon):
    """Return n with epsilon == 1/n, raising ``ValueError`` otherwise."""
    if isinstance(epsilon, (int, np.integer)) and not isinstance(epsilon, bool):
        raise ValueError(f"epsilon must be a reciprocal 1/n, got integer {epsilon}")
    eps = float(epsilon)
    if not eps > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    n = int(round(1.0 / eps))
    if n < 1 or abs(1.0 / n - eps) > 1e-12 * eps:
        raise ValueError(f"epsilon must be the reciprocal of a positive integer, got {epsilon!r}")
    return n


@dataclass(frozen=True)
class CellGeometry:
    """Reference cell ``[0,l1) x [0,l2)`` with an axis-aligned inclusion.

    ``inclusion`` holds ``(x0, y0, x1, y1)`` as fractions of the cell lengths.
    ``inclusion=None`` is the degenerate cell without a second component; it is
    accepted by the cell solvers only.
    """

    cell_lengths: tuple = (1.0, 1.0)
    inclusion: tuple = (Fraction(1, 4), Fraction(1, 4), Fraction(3, 4), Fraction(3, 4))

    def __post_init__(self):
        l1, l2 = (float(v) for v in self.cell_lengths)
        if not (l1 > 0 and l2 > 0):
            raise ValueError("cell lengths must be positive")
        object.__setattr__(self, "cell_lengths", (l1, l2))
        if self.inclusion is None:
            return
        x0, y0, x1, y1 = (_as_fraction(v) for v in self.inclusion)
        if not (0 < x0 < x1 < 1 and 0 < y0 < y1 < 1):
            raise ValueError(
                "inclusion closure must lie strictly inside the cell: "
                f"got ({x0}, {y0}, {x1}, {y1})"
            )
        object.__setattr__(self, "inclusion", (x0, y0, x1, y1))

    @property
    def area(self):
        return self.cell_lengths[0] * self.cell_lengths[1]

    @property
    def theta2(self):
        if self.inclusion is None:
            return 0.0
        x0, y0, x1, y1 = self.inclusion
        return float((x1 - x0) * (y1 - y0))

    @property
    def theta1(self):
        return 1.0 - self.theta2

    @property
    def interface_length(self):
        if self.inclusion is None:
            return 0.0
        x0, y0, x1, y1 = self.inclusion
        l1, l2 = self.cell_lengths
        return 2.0 * (float(x1 - x0) * l1 + float(y1 - y0) * l2)

    def index_box(self, resolution):
        """Grid indices ``(I0, J0, I1, J1)`` of the inclusion corners."""
        if self.inclusion is None:
            return None
        out = []
        for c in self.inclusion:
            v = c * resolution
            if v.denominator != 1:
                raise ResolutionError(
                    f"resolution {resolution} does not align the inclusion corner {c} "
                    f"with mesh lines (need a multiple of {c.denominator})"
                )
            out.append(int(v))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class TwoComponentMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    tri_component: np.ndarray
    vertex_component: np.ndarray
    interface_pairs: np.ndarray  # (P, 2): (component-1 vertex, component-2 vertex)
    interface_edges: np.ndarray  # (E, 2): pair indices of the edge end points
    edge_normals: np.ndarray  # (E, 2): unit normal pointing out of component 1
    edge_tri1: np.ndarray
    edge_tri2: np.ndarray
    boundary_nodes: np.ndarray
    periodic_pairs: np.ndarray  # (Q, 2): (image vertex, master vertex)
    cell: CellGeometry
    resolution: int
    n_cells: int
    cell_node_map: np.ndarray = field(repr=False)
    cell_tri_map: np.ndarray = field(repr=False)
    cell_edge_map: np.ndarray = field(repr=False)

    @property
    def epsilon(self):
        return 1.0 / self.n_cells

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def grid_size(self):
        """Number of mesh intervals per side of the domain."""
        return self.n_cells * self.resolution

    @property
    def areas(self):
        return p1_gradients(self.vertices, self.triangles)[0]

    @property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def edge_lengths(self):
        p = self.vertices[self.interface_pairs[self.interface_edges, 0]]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def component_area(self, i):
        return float(self.areas[self.tri_component == i].sum())

    def periodic_canonical(self):
        """Map every vertex to its periodic master (identity off the outer boundary)."""
        canon = np.arange(self.n_vertices)
        # corners are listed twice (x- and y-images); iterate to a fixed point
        for _ in range(2):
            canon[self.periodic_pairs[:, 0]] = canon[self.periodic_pairs[:, 1]]
        return canon

    def glued_canonical(self):
        """Periodic map that additionally merges each component-2 copy with its partner."""
        canon = self.periodic_canonical()
        canon[self.interface_pairs[:, 1]] = canon[self.interface_pairs[:, 0]]
        return canon

    def to_text(self):
        """Plain-text dump used for golden-file comparisons."""
        lines = [f"VERTICES {self.n_vertices}"]
        lines += [f"{i} {x:.17g} {y:.17g} {c}" for i, ((x, y), c) in
                  enumerate(zip(self.vertices.tolist(), self.vertex_component.tolist()))]
        lines.append(f"TRIANGLES {len(self.triangles)}")
        lines += [f"{t} {a} {b} {c} {k}" for t, ((a, b, c), k) in
                  enumerate(zip(self.triangles.tolist(), self.tri_component.tolist()))]
        lines.append(f"INTERFACE_PAIRS {len(self.interface_pairs)}")
        for p, (a, b) in enumerate(self.interface_pairs.tolist()):
            x, y = self.vertices[a]
            lines.append(f"{p} {a} {b} {x:.17g} {y:.17g}")
        lines.append(f"PERIODIC_PAIRS {len(self.periodic_pairs)}")
        lines += [f"{a} {b}" for a, b in self.periodic_pairs.tolist()]
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------


def _square_triangles(i, j, stride):
    a = i + j * stride
    b = a + 1
    c = a + 1 + stride
    d = a + stride
    if (i + j) % 2 == 0:
        return (a, b, c), (a, c, d)
    return (a, b, d), (b, c, d)


def _local_mesh(cell, r):
    """Single-cell mesh data in cell coordinates (no periodic pairs)."""
    stride = r + 1
    n_grid = stride * stride
    l1, l2 = cell.cell_lengths
    ii, jj = np.meshgrid(np.arange(stride), np.arange(stride), indexing="xy")
    gi, gj = ii.ravel(), jj.ravel()
    grid_xy = np.column_stack([gi * (l1 / r), gj * (l2 / r)])

    box = cell.index_box(r)
    if box is None:
        on_gamma = np.zeros(n_grid, bool)
        inner = np.zeros(n_grid, bool)
    else:
        I0, J0, I1, J1 = box
        closed = (gi >= I0) & (gi <= I1) & (gj >= J0) & (gj <= J1)
        inner = (gi > I0) & (gi < I1) & (gj > J0) & (gj < J1)
        on_gamma = closed & ~inner

    gamma_nodes = np.flatnonzero(on_gamma)
    dup_of = -np.ones(n_grid, dtype=np.int64)
    dup_of[gamma_nodes] = n_grid + np.arange(len(gamma_nodes))

    vertices = np.vstack([grid_xy, grid_xy[gamma_nodes]])
    vcomp = np.ones(len(vertices), dtype=np.int8)
    vcomp[:n_grid][inner] = 2
    vcomp[n_grid:] = 2

    tris, tcomp, grid_tris = [], [], []
    for j in range(r):
        for i in range(r):
            in_incl = box is not None and box[0] <= i < box[2] and box[1] <= j < box[3]
            for tri in _square_triangles(i, j, stride):
                grid_tris.append(tri)
                if in_incl:
                    tris.append(tuple(int(dup_of[v]) if dup_of[v] >= 0 else v for v in tri))
                    tcomp.append(2)
                else:
                    tris.append(tri)
                    tcomp.append(1)
    triangles = np.asarray(tris, dtype=np.int64)
    tcomp = np.asarray(tcomp, dtype=np.int8)

    pairs = np.column_stack([gamma_nodes, dup_of[gamma_nodes]]).astype(np.int64)
    pair_of_grid = -np.ones(n_grid, dtype=np.int64)
    pair_of_grid[gamma_nodes] = np.arange(len(gamma_nodes))

    edges, normals, et1, et2 = [], [], [], []
    if box is not None:
        owner = {}
        for t, tri in enumerate(grid_tris):
            for k in range(3):
                a, b = tri[k], tri[(k + 1) % 3]
                owner.setdefault((min(a, b), max(a, b)), []).append(t)
        I0, J0, I1, J1 = box
        segs = []
        segs += [((i, J0), (i + 1, J0), (0.0, 1.0)) for i in range(I0, I1)]
        segs += [((I1, j), (I1, j + 1), (-1.0, 0.0)) for j in range(J0, J1)]
        segs += [((i + 1, J1), (i, J1), (0.0, -1.0)) for i in range(I0, I1)]
        segs += [((I0, j + 1), (I0, j), (1.0, 0.0)) for j in range(J0, J1)]
        for (ia, ja), (ib, jb), nu in segs:
            a, b = ia + ja * stride, ib + jb * stride
            t1 = [t for t in owner[(min(a, b), max(a, b))] if tcomp[t] == 1]
            t2 = [t for t in owner[(min(a, b), max(a, b))] if tcomp[t] == 2]
            assert len(t1) == 1 and len(t2) == 1
            edges.append((pair_of_grid[a], pair_of_grid[b]))
            normals.append(nu)
            et1.append(t1[0])
            et2.append(t2[0])

    boundary = np.flatnonzero((gi == 0) | (gi == r) | (gj == 0) | (gj == r))
    return dict(
        vertices=vertices,
        triangles=triangles,
        tri_component=tcomp,
        vertex_component=vcomp,
        interface_pairs=pairs.reshape(-1, 2),
        interface_edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        edge_normals=np.asarray(normals, dtype=float).reshape(-1, 2),
        edge_tri1=np.asarray(et1, dtype=np.int64),
        edge_tri2=np.asarray(et2, dtype=np.int64),
        boundary_nodes=boundary.astype(np.int64),
        n_grid=n_grid,
    )


def build_cell_mesh(cell, resolution):
    """Mesh of the reference cell with duplicated Γ nodes and periodic pairs."""
    r = int(resolution)
    if r < 1:
        raise ResolutionError("resolution must be a positive integer")
    loc = _local_mesh(cell, r)
    stride = r + 1
    right = np.array([r + j * stride for j in range(stride)])
    left = np.array([j * stride for j in range(stride)])
    top = np.array([i + r * stride for i in range(stride)])
    bottom = np.arange(stride)
    periodic = np.vstack([np.column_stack([right, left]), np.column_stack([top, bottom])])
    nv, nt, ne = len(loc["vertices"]), len(loc["triangles"]), len(loc["interface_edges"])
    return TwoComponentMesh(
        vertices=loc["vertices"],
        triangles=loc["triangles"],
        tri_component=loc["tri_component"],
        vertex_component=loc["vertex_component"],
        interface_pairs=loc["interface_pairs"],
        interface_edges=loc["interface_edges"],
        edge_normals=loc["edge_normals"],
        edge_tri1=loc["edge_tri1"],
        edge_tri2=loc["edge_tri2"],
        boundary_nodes=loc["boundary_nodes"],
        periodic_pairs=periodic.astype(np.int64),
        cell=cell,
        resolution=r,
        n_cells=1,
        cell_node_map=np.arange(nv)[None, :],
        cell_tri_map=np.arange(nt)[None, :],
        cell_edge_map=np.arange(ne)[None, :],
    )


def build_epsilon_mesh(cell, epsilon, per_cell_resolution):
    """Mesh of Ω = (0,1)² tiled by n² copies of the scaled cell mesh, ε = 1/n."""
    if cell.inclusion is None:
        raise ValueError("the ε-domain needs a cell with an inclusion")
    if cell.cell_lengths != (1.0, 1.0):
        raise ValueError("the ε-tiling of the unit square needs the unit reference cell")
    n = cells_per_side(epsilon)
    r = int(per_cell_resolution)
    loc = _local_mesh(cell, r)
    stride = r + 1
    N = n * r
    gstride = N + 1
    n_grid_global = gstride * gstride
    n_grid = loc["n_grid"]
    nv_loc = len(loc["vertices"])
    n_dup = nv_loc - n_grid

    kk = np.arange(n * n)
    k1, k2 = kk % n, kk // n
    vloc = np.arange(nv_loc)
    gi = vloc[:n_grid] % stride
    gj = vloc[:n_grid] // stride
    node_map = np.empty((n * n, nv_loc), dtype=np.int64)
    node_map[:, :n_grid] = (k1[:, None] * r + gi[None, :]) + (k2[:, None] * r + gj[None, :]) * gstride
    node_map[:, n_grid:] = n_grid_global + kk[:, None] * n_dup + np.arange(n_dup)[None, :]

    I, J = np.meshgrid(np.arange(gstride), np.arange(gstride), indexing="xy")
    grid_xy = np.column_stack([I.ravel() / N, J.ravel() / N])
    vertices = np.empty((n_grid_global + n * n * n_dup, 2))
    vertices[:n_grid_global] = grid_xy
    dup_src = loc["interface_pairs"][:, 0]
    vertices[n_grid_global:] = grid_xy[node_map[:, dup_src].ravel()]

    vcomp = np.ones(len(vertices), dtype=np.int8)
    vcomp[node_map[:, loc["vertex_component"] == 2].ravel()] = 2

    nt_loc = len(loc["triangles"])
    ne_loc = len(loc["interface_edges"])
    np_loc = len(loc["interface_pairs"])
    triangles = node_map[kk[:, None, None], loc["triangles"][None, :, :]].reshape(-1, 3)
    pairs = np.column_stack([
        node_map[:, loc["interface_pairs"][:, 0]].ravel(),
        node_map[:, loc["interface_pairs"][:, 1]].ravel(),
    ])
    edges = (loc["interface_edges"][None, :, :] + (kk * np_loc)[:, None, None]).reshape(-1, 2)
    boundary = np.flatnonzero((I.ravel() == 0) | (I.ravel() == N) | (J.ravel() == 0) | (J.ravel() == N))
    return TwoComponentMesh(
        vertices=vertices,
        triangles=triangles,
        tri_component=np.tile(loc["tri_component"], n * n),
        vertex_component=vcomp,
        interface_pairs=pairs,
        interface_edges=edges,
        edge_normals=np.tile(loc["edge_normals"], (n * n, 1)),
        edge_tri1=(loc["edge_tri1"][None, :] + (kk * nt_loc)[:, None]).ravel(),
        edge_tri2=(loc["edge_tri2"][None, :] + (kk * nt_loc)[:, None]).ravel(),
        boundary_nodes=boundary.astype(np.int64),
        periodic_pairs=np.zeros((0, 2), dtype=np.int64),
        cell=cell,
        resolution=r,
        n_cells=n,
        cell_node_map=node_map,
        cell_tri_map=kk[:, None] * nt_loc + np.arange(nt_loc)[None, :],
        cell_edge_map=kk[:, None] * ne_loc + np.arange(ne_loc)[None, :],
    )
