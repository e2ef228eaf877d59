"""P1 finite elements on triangular meshes.

Stiffness and mass use exact closed forms; load vectors use the 3-point
edge-midpoint rule (exact for quadratics), so no quadrature error enters the
derivative validations. Essential boundary conditions are applied by
symmetric elimination, which keeps eigenproblems symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import (
    AssemblyError,
    BCError,
    EvaluationError,
    GeometryError,
    InvalidArgumentError,
)
from .mesh import BoundaryTag, Mesh, boundary_geometry

ScalarData = Union[float, int, np.ndarray, Callable[[np.ndarray], np.ndarray], "Field"]


@dataclass(frozen=True)
class Field:
    """Nodal scalar function on a mesh."""

    mesh: Mesh
    values: np.ndarray
    name: str = "field"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.mesh.num_nodes,):
            raise InvalidArgumentError(
                f"field needs {self.mesh.num_nodes} values, got shape {values.shape}"
            )
        if not np.isfinite(values).all():
            raise InvalidArgumentError(f"field '{self.name}' contains non-finite values")
        object.__setattr__(self, "values", values)
        values.flags.writeable = False


def as_nodal(mesh: Mesh, data: ScalarData, name: str = "field") -> np.ndarray:
    """Nodal values of a constant, callable, array, or Field."""
    if isinstance(data, Field):
        if data.mesh is not mesh and data.mesh.num_nodes != mesh.num_nodes:
            raise InvalidArgumentError("field belongs to a different mesh")
        return data.values
    if callable(data):
        return np.asarray(data(mesh.nodes), dtype=np.float64).reshape(mesh.num_nodes)
    if np.isscalar(data):
        return np.full(mesh.num_nodes, float(data))
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape != (mesh.num_nodes,):
        raise InvalidArgumentError(f"nodal data for '{name}' has wrong shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# element geometry
# ---------------------------------------------------------------------------


def _gradients(mesh: Mesh):
    """Per-triangle shape-function gradients (m, 3, 2) and areas (m,)."""
    p = mesh.nodes[mesh.triangles]
    areas = mesh.triangle_areas
    if areas.size and areas.min() <= 0:
        raise AssemblyError(f"degenerate triangle {int(np.argmin(areas))}")
    g = np.empty((mesh.num_triangles, 3, 2))
    # grad of barycentric coordinate k is the rotated opposite edge / (2 area)
    for k in range(3):
        e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        g[:, k, 0] = -e[:, 1]
        g[:, k, 1] = e[:, 0]
    g /= (2.0 * areas)[:, None, None]
    return g, areas


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Stiffness matrix K with K[i, j] = integral of grad(phi_i) . grad(phi_j)."""
    g, areas = _gradients(mesh)
    ke = np.einsum("tkd,tld->tkl", g, g) * areas[:, None, None]
    return _scatter(mesh, ke)


_OPERATOR_CACHE: "weakref.WeakKeyDictionary" = None


def operators(mesh: Mesh):
    """Cached (stiffness, mass) pair for an immutable mesh."""
    global _OPERATOR_CACHE
    if _OPERATOR_CACHE is None:
        import weakref

        _OPERATOR_CACHE = weakref.WeakKeyDictionary()
    hit = _OPERATOR_CACHE.get(mesh)
    if hit is None:
        hit = (assemble_stiffness(mesh), assemble_mass(mesh))
        _OPERATOR_CACHE[mesh] = hit
    return hit


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent mass matrix M with M[i, j] = integral of phi_i phi_j."""
    areas = mesh.triangle_areas
    if areas.size and areas.min() <= 0:
        raise AssemblyError(f"degenerate triangle {int(np.argmin(areas))}")
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = areas[:, None, None] * base[None, :, :]
    return _scatter(mesh, me)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.num_nodes, mesh.num_nodes)
    ).tocsr()
    return ((mat + mat.T) * 0.5).tocsr()


def assemble_load(mesh: Mesh, f: ScalarData) -> np.ndarray:
    """Load vector F[i] = integral of f phi_i.

    Nodal data integrates exactly through the mass matrix; callables and
    constants use the edge-midpoint rule.
    """
    if isinstance(f, Field) or (
        isinstance(f, np.ndarray) and f.shape == (mesh.num_nodes,)
    ):
        return assemble_mass(mesh) @ as_nodal(mesh, f)
    if np.isscalar(f):
        c = float(f)
        fn = lambda p: np.full(len(p), c)  # noqa: E731
    elif callable(f):
        fn = f
    else:
        raise InvalidArgumentError("source must be scalar, callable, nodal array or Field")
    p = mesh.nodes[mesh.triangles]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))  # mid of edges (0,1), (1,2), (2,0)
    vals = np.asarray(fn(mids.reshape(-1, 2)), dtype=np.float64).reshape(-1, 3)
    areas = mesh.triangle_areas
    local = np.empty((mesh.num_triangles, 3))
    # vertex k is supported on the midpoints of its two incident edges
    local[:, 0] = (vals[:, 0] + vals[:, 2]) * areas / 6.0
    local[:, 1] = (vals[:, 0] + vals[:, 1]) * areas / 6.0
    local[:, 2] = (vals[:, 1] + vals[:, 2]) * areas / 6.0
    out = np.zeros(mesh.num_nodes)
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out


def assemble_vector_load(mesh: Mesh, A) -> np.ndarray:
    """Vector G[i] = integral of A . grad(phi_i), exact for element-constant A.

    A may be a callable evaluated at element centroids, a per-element
    (m, 2) array, or a nodal (n, 2) array averaged to centroids.
    """
    m, n = mesh.num_triangles, mesh.num_nodes
    if callable(A):
        vals = np.asarray(A(mesh.triangle_centroids), dtype=np.float64).reshape(m, 2)
    else:
        arr = np.asarray(A, dtype=np.float64)
        if arr.shape == (m, 2):
            # per-element constants win when m == n and the shape is ambiguous
            vals = arr
        elif arr.shape == (n, 2):
            vals = arr[mesh.triangles].mean(axis=1)
        else:
            raise InvalidArgumentError(f"vector data has wrong shape {arr.shape}")
    g, areas = _gradients(mesh)
    local = np.einsum("td,tkd->tk", vals, g) * areas[:, None]
    out = np.zeros(n)
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out


# ---------------------------------------------------------------------------
# essential boundary conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EssentialBC:
    """Prescribed nodal values on tagged boundaries."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if len(np.unique(nodes)) != len(nodes):
            raise BCError("duplicate node in essential boundary condition")
        if nodes.shape != values.shape:
            raise BCError("one value per constrained node required")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)


def dirichlet_bc(mesh: Mesh, tags: Iterable[BoundaryTag], value: float = 0.0) -> EssentialBC:
    """Zero (or constant) Dirichlet condition on the given tags."""
    ids = [mesh.boundary_nodes(tag) for tag in tags]
    nodes = np.unique(np.concatenate(ids)) if ids else np.zeros(0, dtype=np.int64)
    return EssentialBC(nodes, np.full(len(nodes), float(value)))


def check_bc_on_boundary(mesh: Mesh, bc: EssentialBC) -> None:
    on_boundary = np.zeros(mesh.num_nodes, dtype=bool)
    on_boundary[mesh.boundary_nodes()] = True
    off = bc.nodes[~on_boundary[bc.nodes]]
    if len(off):
        raise BCError(f"constrained node {int(off[0])} is not on any tagged boundary")


@dataclass(frozen=True)
class ReducedSystem:
    """Operator and right-hand side after symmetric elimination."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    size: int

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.free] = u_free
        out[self.fixed] = self.fixed_values
        return out

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.free]


def apply_dirichlet(op: sp.spmatrix, rhs: np.ndarray, bc: EssentialBC,
                    mesh: Optional[Mesh] = None) -> ReducedSystem:
    """Eliminate constrained rows and columns, correcting the right-hand side."""
    if mesh is not None:
        check_bc_on_boundary(mesh, bc)
    n = op.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[bc.nodes] = False
    free = np.nonzero(mask)[0]
    op = op.tocsr()
    a_ff = op[free][:, free]
    if len(bc.nodes):
        a_fc = op[free][:, bc.nodes]
        rhs_f = np.asarray(rhs)[free] - a_fc @ bc.values
    else:
        rhs_f = np.asarray(rhs)[free]
    return ReducedSystem(
        matrix=a_ff.tocsr(),
        rhs=rhs_f,
        free=free,
        fixed=np.asarray(bc.nodes),
        fixed_values=np.asarray(bc.values),
        size=n,
    )


# ---------------------------------------------------------------------------
# boundary calculus
# ---------------------------------------------------------------------------


def boundary_integral(mesh: Mesh, tag: BoundaryTag, density: np.ndarray) -> float:
    """Trapezoidal integral of a nodal density over the tagged boundary.

    density is a full-length nodal array; only its values on the tagged
    boundary contribute.
    """
    geo = boundary_geometry(mesh, tag)
    d = np.asarray(density, dtype=np.float64)
    if d.shape != (mesh.num_nodes,):
        raise InvalidArgumentError("density must be a full-length nodal array")
    a, b = geo.edges[:, 0], geo.edges[:, 1]
    return float((geo.edge_lengths * 0.5 * (d[a] + d[b])).sum())


def element_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Element-constant gradients (m, 2) of a P1 field."""
    g, _ = _gradients(mesh)
    return np.einsum("tk,tkd->td", np.asarray(u)[mesh.triangles], g)


def _vertex_angles(mesh: Mesh) -> np.ndarray:
    p = mesh.nodes[mesh.triangles]
    ang = np.empty((mesh.num_triangles, 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        c = (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        ang[:, k] = np.arccos(np.clip(c, -1.0, 1.0))
    return ang


def recover_node_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Angle-weighted average of adjacent element gradients at each node."""
    grads = element_gradients(mesh, u)
    weights = _vertex_angles(mesh)
    acc = np.zeros((mesh.num_nodes, 2))
    wsum = np.zeros(mesh.num_nodes)
    idx = mesh.triangles.ravel()
    np.add.at(acc, idx, (weights[:, :, None] * grads[:, None, :]).reshape(-1, 2))
    np.add.at(wsum, idx, weights.ravel())
    wsum[wsum == 0] = 1.0
    return acc / wsum[:, None]


def normal_derivative(mesh: Mesh, tag: BoundaryTag, u) -> np.ndarray:
    """Nodal du/dn on the tagged boundary (zeros elsewhere).

    Per boundary node: angle-weighted average of element-constant gradients
    dotted with the node's outward normal.
    """
    values = u.values if isinstance(u, Field) else np.asarray(u, dtype=np.float64)
    geo = boundary_geometry(mesh, tag)
    grads = recover_node_gradients(mesh, values)
    out = np.zeros(mesh.num_nodes)
    out[geo.node_ids] = (grads[geo.node_ids] * geo.node_normals).sum(axis=1)
    return out


def tangential_gradient(mesh: Mesh, tag: BoundaryTag, s: np.ndarray) -> np.ndarray:
    """Centered arclength derivative of a nodal scalar along each closed loop."""
    geo = boundary_geometry(mesh, tag)
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros(mesh.num_nodes)
    for loop in geo.loops:
        if len(loop) < 3:
            raise GeometryError("tangential gradient needs a loop of at least 3 nodes")
        pts = mesh.nodes[loop]
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)  # i -> i+1
        l_prev = np.roll(seg, 1)
        out[loop] = (np.roll(s[loop], -1) - np.roll(s[loop], 1)) / (l_prev + seg)
    return out


def surface_laplacian(mesh: Mesh, tag: BoundaryTag, s: np.ndarray) -> np.ndarray:
    """Second arclength difference of a nodal scalar along each closed loop."""
    geo = boundary_geometry(mesh, tag)
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros(mesh.num_nodes)
    for loop in geo.loops:
        pts = mesh.nodes[loop]
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        l_prev = np.roll(seg, 1)
        sv = s[loop]
        fwd = (np.roll(sv, -1) - sv) / seg
        bwd = (sv - np.roll(sv, 1)) / l_prev
        out[loop] = 2.0 * (fwd - bwd) / (l_prev + seg)
    return out


def boundary_curvature(mesh: Mesh, tag: BoundaryTag) -> np.ndarray:
    """Signed discrete curvature (turning angle per arclength) at loop nodes.

    Positive where the domain is locally convex; a unit disk's OUTER loop
    gives +1, a radius-r obstacle loop gives -1/r.
    """
    geo = boundary_geometry(mesh, tag)
    out = np.zeros(mesh.num_nodes)
    for loop in geo.loops:
        pts = mesh.nodes[loop]
        fwd = np.roll(pts, -1, axis=0) - pts
        bwd = pts - np.roll(pts, 1, axis=0)
        turn = np.arctan2(
            bwd[:, 0] * fwd[:, 1] - bwd[:, 1] * fwd[:, 0],
            (bwd * fwd).sum(axis=1),
        )
        w = 0.5 * (np.linalg.norm(fwd, axis=1) + np.linalg.norm(bwd, axis=1))
        out[loop] = turn / w
    return out


# ---------------------------------------------------------------------------
# norms and point evaluation
# ---------------------------------------------------------------------------


def l2_norm(u: Field) -> float:
    m = assemble_mass(u.mesh)
    return float(np.sqrt(max(u.values @ (m @ u.values), 0.0)))


def h1_norm(u: Field) -> float:
    k = assemble_stiffness(u.mesh)
    m = assemble_mass(u.mesh)
    return float(np.sqrt(max(u.values @ (k @ u.values) + u.values @ (m @ u.values), 0.0)))


def locate_points(mesh: Mesh, points: np.ndarray, tol: float = 1e-10):
    """Containing triangle and barycentric coordinates for each query point."""
    from scipy.spatial import cKDTree

    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tree = cKDTree(mesh.triangle_centroids)
    kcand = min(32, mesh.num_triangles)
    _, cand = tree.query(points, k=kcand)
    cand = np.atleast_2d(cand)
    tri_idx = np.full(len(points), -1, dtype=np.int64)
    bary = np.zeros((len(points), 3))
    p = mesh.nodes[mesh.triangles]
    for i, pt in enumerate(points):
        found = False
        for t in cand[i]:
            lam = _barycentric(p[t], pt)
            if lam.min() >= -tol:
                tri_idx[i] = t
                bary[i] = lam
                found = True
                break
        if not found:
            # fall back to a global scan with a looser tolerance
            lam_all = np.array([_barycentric(p[t], pt) for t in range(mesh.num_triangles)])
            best = int(np.argmax(lam_all.min(axis=1)))
            if lam_all[best].min() >= -1e-6:
                tri_idx[i] = best
                bary[i] = np.clip(lam_all[best], 0.0, None)
                bary[i] /= bary[i].sum()
            else:
                raise EvaluationError(f"point {pt} lies outside the mesh")
    return tri_idx, bary


def _barycentric(tri_pts, pt):
    a, b, c = tri_pts
    m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    rhs = np.asarray(pt) - a
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    l1 = (m[1, 1] * rhs[0] - m[0, 1] * rhs[1]) / det
    l2 = (-m[1, 0] * rhs[0] + m[0, 0] * rhs[1]) / det
    return np.array([1.0 - l1 - l2, l1, l2])


def interpolate(mesh: Mesh, u: np.ndarray, points: np.ndarray) -> np.ndarray:
    """P1 evaluation of nodal values at arbitrary points inside the mesh."""
    tri_idx, bary = locate_points(mesh, points)
    vals = np.asarray(u)[mesh.triangles[tri_idx]]
    return (vals * bary).sum(axis=1)


def interpolate_gradient(mesh: Mesh, u: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Recovered (nodal-averaged) gradient of a P1 field at arbitrary points."""
    tri_idx, bary = locate_points(mesh, points)
    g = recover_node_gradients(mesh, np.asarray(u))
    vals = g[mesh.triangles[tri_idx]]
    return (vals * bary[:, :, None]).sum(axis=1)
