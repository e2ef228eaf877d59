"""Triangular 2D meshes with tagged boundaries.

Meshes are immutable: every operation returns a new mesh. Boundary edges are
stored directed so that the domain interior lies on the LEFT of the edge
direction; the outward unit normal is the direction rotated by -90 degrees.

Generators are deterministic (no randomized point insertion) so that
finite-difference sweeps compare identical connectivity across perturbations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DeformationError,
    GeometryError,
    InvalidArgumentError,
    MeshQualityError,
    ResolutionError,
    TagNotFoundError,
)

DEFAULT_MIN_ANGLE_DEG = 15.0


class BoundaryTag(enum.IntEnum):
    """Which physical boundary a boundary edge belongs to."""

    OUTER = 1
    OBSTACLE = 2
    HOLE = 3


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulated 2D domain.

    Identity-hashed (eq=False) so assembled operators can be cached per mesh.

    Attributes
    ----------
    nodes : (n, 2) float array
        Node coordinates.
    triangles : (m, 3) int array
        Node indices, counterclockwise.
    boundary_edges : (b, 2) int array
        Directed boundary edges, interior on the left.
    boundary_tags : (b,) int array
        BoundaryTag value per boundary edge.
    parent_nodes : optional (n,) int array
        For meshes derived by hole punching: index of each node in the
        parent mesh. None for generated meshes.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    parent_nodes: Optional[np.ndarray] = None

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=np.float64))
        tris = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        edges = np.ascontiguousarray(np.asarray(self.boundary_edges, dtype=np.int64))
        tags = np.ascontiguousarray(np.asarray(self.boundary_tags, dtype=np.int64))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_edges", edges)
        object.__setattr__(self, "boundary_tags", tags)
        self._validate()
        for arr in (nodes, tris, edges, tags):
            arr.flags.writeable = False
        if self.parent_nodes is not None:
            pn = np.ascontiguousarray(np.asarray(self.parent_nodes, dtype=np.int64))
            object.__setattr__(self, "parent_nodes", pn)
            pn.flags.writeable = False

    def _validate(self):
        n = len(self.nodes)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise InvalidArgumentError("nodes must be (n, 2)")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise InvalidArgumentError("triangle node index out of range")
        if self.boundary_edges.size and (
            self.boundary_edges.min() < 0 or self.boundary_edges.max() >= n
        ):
            raise InvalidArgumentError("boundary edge node index out of range")
        if len(self.boundary_edges) != len(self.boundary_tags):
            raise InvalidArgumentError("one tag per boundary edge required")
        areas = _signed_areas(self.nodes, self.triangles)
        if areas.size and areas.min() <= 0.0:
            worst = int(np.argmin(areas))
            raise InvalidArgumentError(
                f"triangle {worst} has non-positive area {areas.min():.3e}"
            )
        # Every boundary edge must be owned by exactly one triangle, and each
        # tag's edge set must form closed loops (in-degree == out-degree == 1).
        once = _directed_edge_set(self.triangles)
        for (a, b) in self.boundary_edges:
            if (int(a), int(b)) not in once:
                raise InvalidArgumentError(f"boundary edge ({a}, {b}) not on mesh boundary")
        for tag in np.unique(self.boundary_tags):
            sel = self.boundary_edges[self.boundary_tags == tag]
            out_deg = np.bincount(sel[:, 0], minlength=n)
            in_deg = np.bincount(sel[:, 1], minlength=n)
            if not np.array_equal(out_deg, in_deg):
                raise InvalidArgumentError(
                    f"boundary edges of tag {BoundaryTag(tag).name} do not form closed loops"
                )

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        return _signed_areas(self.nodes, self.triangles)

    @cached_property
    def area(self) -> float:
        return float(self.triangle_areas.sum())

    @cached_property
    def triangle_centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Lengths of all unique (undirected) triangle edges."""
        e = _unique_edges(self.triangles)
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def tags_present(self) -> list[BoundaryTag]:
        return [BoundaryTag(int(t)) for t in np.unique(self.boundary_tags)]

    def has_tag(self, tag: BoundaryTag) -> bool:
        return bool(np.any(self.boundary_tags == int(tag)))

    def edges_of(self, tag: BoundaryTag) -> np.ndarray:
        if not self.has_tag(tag):
            raise TagNotFoundError(f"mesh has no boundary tagged {tag.name}")
        return self.boundary_edges[self.boundary_tags == int(tag)]

    def boundary_nodes(self, tag: Optional[BoundaryTag] = None) -> np.ndarray:
        """Sorted unique node indices on the tagged boundary (all tags if None)."""
        if tag is None:
            edges = self.boundary_edges
        else:
            edges = self.edges_of(tag)
        return np.unique(edges)

    def min_angle_deg(self) -> float:
        return float(triangle_min_angles(self).min()) if self.num_triangles else 180.0


@dataclass(frozen=True)
class VelocityField:
    """Deformation direction V in the perturbation x + t*V(x).

    Either analytic (a callable mapping (k, 2) points to (k, 2) vectors) or
    nodal (one vector per mesh node).
    """

    name: str
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    values: Optional[np.ndarray] = None

    @staticmethod
    def analytic(fn: Callable[[np.ndarray], np.ndarray], name: str = "analytic") -> "VelocityField":
        return VelocityField(name=name, fn=fn)

    @staticmethod
    def nodal(values: np.ndarray, name: str = "nodal") -> "VelocityField":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != 2:
            raise InvalidArgumentError("nodal velocity must be (n, 2)")
        return VelocityField(name=name, values=values)

    @property
    def kind(self) -> str:
        return "nodal" if self.values is not None else "analytic"

    def at_nodes(self, mesh: Mesh) -> np.ndarray:
        if self.values is not None:
            if len(self.values) != mesh.num_nodes:
                raise InvalidArgumentError(
                    f"nodal velocity has {len(self.values)} vectors for {mesh.num_nodes} nodes"
                )
            return np.asarray(self.values, dtype=np.float64)
        out = np.asarray(self.fn(mesh.nodes), dtype=np.float64)
        if out.shape != mesh.nodes.shape:
            raise InvalidArgumentError("analytic velocity must return one 2-vector per point")
        return out

    def at_points(self, points: np.ndarray) -> np.ndarray:
        if self.fn is None:
            raise InvalidArgumentError("nodal velocity cannot be evaluated off-node")
        return np.asarray(self.fn(np.asarray(points, dtype=np.float64)), dtype=np.float64)


@dataclass(frozen=True)
class HoleSpec:
    """Disk-shaped hole x0 + eps * (unit disk).

    cap_omega and mes_omega are the capacity and area constants of the unit
    reference hole; the disk fixes mes_omega = pi.
    """

    center: tuple[float, float]
    eps: float
    cap_omega: float = 1.0
    mes_omega: float = math.pi

    def __post_init__(self):
        if self.eps <= 0:
            raise InvalidArgumentError("hole radius eps must be positive")
        if self.cap_omega <= 0 or self.mes_omega <= 0:
            raise InvalidArgumentError("cap_omega and mes_omega must be positive")


@dataclass(frozen=True)
class BoundaryGeometry:
    """Geometry of one tagged boundary.

    node_ids, node_normals and node_weights are aligned; loops lists the
    ordered node cycles (first node not repeated).
    """

    tag: BoundaryTag
    edges: np.ndarray
    edge_normals: np.ndarray
    edge_lengths: np.ndarray
    node_ids: np.ndarray
    node_normals: np.ndarray
    node_weights: np.ndarray
    loops: list[np.ndarray] = field(default_factory=list)


# ---------------------------------------------------------------------------
# low-level helpers
# ---------------------------------------------------------------------------


def _signed_areas(nodes, triangles):
    if len(triangles) == 0:
        return np.zeros(0)
    p = nodes[triangles]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )


def _directed_edge_set(triangles):
    out = set()
    for t in triangles:
        a, b, c = (int(t[0]), int(t[1]), int(t[2]))
        rev = {(b, a), (c, b), (a, c)}
        for e in ((a, b), (b, c), (c, a)):
            out.add(e)
    # keep only edges whose reverse is absent: those are boundary candidates
    return {e for e in out if (e[1], e[0]) not in out}


def _unique_edges(triangles):
    e = np.vstack(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    e.sort(axis=1)
    return np.unique(e, axis=0)


def boundary_edges_from_triangles(triangles: np.ndarray) -> np.ndarray:
    """Directed boundary edges (interior-left) extracted from connectivity."""
    edges = {}
    for t in triangles:
        a, b, c = (int(t[0]), int(t[1]), int(t[2]))
        for e in ((a, b), (b, c), (c, a)):
            if (e[1], e[0]) in edges:
                del edges[(e[1], e[0])]
            else:
                edges[e] = True
    return np.array(sorted(edges.keys()), dtype=np.int64).reshape(-1, 2)


def triangle_min_angles(mesh: Mesh) -> np.ndarray:
    """Smallest interior angle of each triangle in degrees."""
    p = mesh.nodes[mesh.triangles]
    angles = np.empty((mesh.num_triangles, 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = (u * v).sum(axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        angles[:, k] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return angles.min(axis=1)


def _order_loops(edges: np.ndarray) -> list[np.ndarray]:
    """Split directed edges into ordered closed node loops."""
    succ = {int(a): int(b) for a, b in edges}
    if len(succ) != len(edges):
        raise GeometryError("boundary edges do not form simple loops")
    loops = []
    remaining = dict(succ)
    while remaining:
        start = min(remaining.keys())
        loop = [start]
        cur = remaining.pop(start)
        while cur != start:
            loop.append(cur)
            if cur not in remaining:
                raise GeometryError("open boundary loop detected")
            cur = remaining.pop(cur)
        loops.append(np.array(loop, dtype=np.int64))
    return loops


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def generate_rectangle(width: float, height: float, h: float) -> Mesh:
    """Structured crossed-triangle mesh of [0, width] x [0, height].

    Each grid cell gets a center node and four triangles (the crossed
    variant), so a (nx x ny)-cell grid has (nx+1)(ny+1) + nx*ny nodes and
    4*nx*ny triangles. Deterministic; maximum edge length <= 1.5 h.
    """
    if width <= 0 or height <= 0 or h <= 0:
        raise InvalidArgumentError("width, height and h must be positive")
    if h >= min(width, height):
        raise InvalidArgumentError("h must be smaller than the shortest side")
    nx = max(1, math.ceil(width / h))
    ny = max(1, math.ceil(height / h))
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])

    def gid(i, j):
        return i * (ny + 1) + j

    n_grid = (nx + 1) * (ny + 1)
    centers = np.empty((nx * ny, 2))
    tris = []
    for i in range(nx):
        for j in range(ny):
            c = n_grid + i * ny + j
            centers[i * ny + j] = [0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])]
            bl, br = gid(i, j), gid(i + 1, j)
            tr, tl = gid(i + 1, j + 1), gid(i, j + 1)
            tris += [[bl, br, c], [br, tr, c], [tr, tl, c], [tl, bl, c]]
    nodes = np.vstack([grid, centers])
    triangles = np.array(tris, dtype=np.int64)
    edges = boundary_edges_from_triangles(triangles)
    tags = np.full(len(edges), int(BoundaryTag.OUTER))
    return Mesh(nodes, triangles, edges, tags)


def _ring_nodes(center, radius_list, count_list):
    """Node coordinates and per-ring index lists for concentric rings."""
    cx, cy = center
    nodes = []
    rings = []
    for r, cnt in zip(radius_list, count_list):
        if cnt == 1:
            rings.append([len(nodes)])
            nodes.append((cx, cy))
            continue
        start = len(nodes)
        theta = 2.0 * math.pi * np.arange(cnt) / cnt
        for t in theta:
            nodes.append((cx + r * math.cos(t), cy + r * math.sin(t)))
        rings.append(list(range(start, start + cnt)))
    return np.array(nodes), rings


def _stitch_rings(nodes, ring_a, ring_b, center):
    """Triangulate the annular band between two concentric node rings.

    ring_a is the inner ring (may be a single center node), ring_b the outer.
    Both are CCW-ordered starting at angle 0. Returns CCW triangles.
    """
    tris = []
    if len(ring_a) == 1:
        c = ring_a[0]
        nb = len(ring_b)
        for j in range(nb):
            tris.append([c, ring_b[j], ring_b[(j + 1) % nb]])
        return tris

    def angles(ring):
        p = nodes[ring] - np.asarray(center)
        a = np.arctan2(p[:, 1], p[:, 0])
        return np.where(a < -1e-12, a + 2 * math.pi, a)

    ta, tb = angles(ring_a), angles(ring_b)
    na, nb = len(ring_a), len(ring_b)
    ea = np.concatenate([ta, [ta[0] + 2 * math.pi]])
    eb = np.concatenate([tb, [tb[0] + 2 * math.pi]])
    i = j = 0
    while i < na or j < nb:
        advance_a = i < na and (j >= nb or ea[i + 1] <= eb[j + 1])
        if advance_a:
            tri = [ring_a[i % na], ring_b[j % nb], ring_a[(i + 1) % na]]
            i += 1
        else:
            tri = [ring_a[i % na], ring_b[j % nb], ring_b[(j + 1) % nb]]
            j += 1
        a, b, c = tri
        area = 0.5 * np.cross(nodes[b] - nodes[a], nodes[c] - nodes[a])
        if area < 0:
            tri = [a, c, b]
        tris.append(tri)
    return tris


def generate_disk(center: Sequence[float], radius: float, h: float) -> Mesh:
    """Quasi-uniform disk triangulation from concentric rings.

    Ring i of n carries 6*i nodes; boundary nodes lie exactly on the circle.
    """
    if radius <= 0 or h <= 0:
        raise InvalidArgumentError("radius and h must be positive")
    if h >= radius:
        raise InvalidArgumentError("h must be smaller than the radius")
    n_rings = max(2, math.ceil(radius / h))
    radii = [0.0] + [radius * i / n_rings for i in range(1, n_rings + 1)]
    counts = [1] + [6 * i for i in range(1, n_rings + 1)]
    nodes, rings = _ring_nodes(tuple(center), radii, counts)
    tris = []
    for k in range(n_rings):
        tris += _stitch_rings(nodes, rings[k], rings[k + 1], tuple(center))
    triangles = np.array(tris, dtype=np.int64)
    edges = boundary_edges_from_triangles(triangles)
    tags = np.full(len(edges), int(BoundaryTag.OUTER))
    return Mesh(nodes, triangles, edges, tags)


@dataclass(frozen=True)
class DiskSpec:
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class RectSpec:
    width: float
    height: float
    origin: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class PolygonSpec:
    points: tuple  # CCW-ordered vertices


def generate_annulus(outer, obstacle, h: float) -> Mesh:
    """Mesh of (outer domain) minus (obstacle), obstacle boundary tagged OBSTACLE.

    Concentric disk-minus-disk uses an exact ring construction; other
    combinations carve the obstacle out of the generated outer mesh.
    """
    if isinstance(outer, DiskSpec) and isinstance(obstacle, DiskSpec):
        if obstacle.radius <= 0:
            raise InvalidArgumentError("obstacle radius must be positive")
        dist = math.hypot(
            outer.center[0] - obstacle.center[0], outer.center[1] - obstacle.center[1]
        )
        if dist + obstacle.radius >= outer.radius:
            raise GeometryError("obstacle is not strictly inside the outer disk")
        if dist <= 1e-14:
            return _concentric_annulus(outer.center, obstacle.radius, outer.radius, h)
        base = generate_disk(outer.center, outer.radius, h)
        return _carve_disk(base, obstacle.center, obstacle.radius, BoundaryTag.OBSTACLE)
    if isinstance(outer, RectSpec) and isinstance(obstacle, PolygonSpec):
        base = generate_rectangle(outer.width, outer.height, h)
        pts = np.asarray(obstacle.points, dtype=np.float64)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        if lo[0] <= 0 or lo[1] <= 0 or hi[0] >= outer.width or hi[1] >= outer.height:
            raise GeometryError("obstacle polygon is not strictly inside the rectangle")
        return _carve_polygon(base, pts, BoundaryTag.OBSTACLE)
    if isinstance(outer, RectSpec) and isinstance(obstacle, DiskSpec):
        base = generate_rectangle(outer.width, outer.height, h)
        cx, cy = obstacle.center
        r = obstacle.radius
        if cx - r <= 0 or cy - r <= 0 or cx + r >= outer.width or cy + r >= outer.height:
            raise GeometryError("obstacle disk is not strictly inside the rectangle")
        return _carve_disk(base, obstacle.center, r, BoundaryTag.OBSTACLE)
    raise InvalidArgumentError("unsupported outer/obstacle spec combination")


def _concentric_annulus(center, r_in, r_out, h):
    n_rings = max(2, math.ceil((r_out - r_in) / h))
    radii = [r_in + (r_out - r_in) * i / n_rings for i in range(n_rings + 1)]
    counts = [max(8, round(2 * math.pi * r / h)) for r in radii]
    nodes, rings = _ring_nodes(tuple(center), radii, counts)
    tris = []
    for k in range(n_rings):
        tris += _stitch_rings(nodes, rings[k], rings[k + 1], tuple(center))
    triangles = np.array(tris, dtype=np.int64)
    edges = boundary_edges_from_triangles(triangles)
    cx, cy = center
    mids = 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])
    rad = np.hypot(mids[:, 0] - cx, mids[:, 1] - cy)
    tags = np.where(
        rad < 0.5 * (r_in + r_out), int(BoundaryTag.OBSTACLE), int(BoundaryTag.OUTER)
    )
    return Mesh(nodes, triangles, edges, tags)


# ---------------------------------------------------------------------------
# carving and hole punching
# ---------------------------------------------------------------------------


def _point_in_polygon(points, poly):
    """Ray-casting point-in-polygon test, vectorized over points."""
    inside = np.zeros(len(points), dtype=bool)
    x, y = points[:, 0], points[:, 1]
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        cond = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (x < xint)
    return inside


def _project_to_polygon(points, poly):
    """Closest point on the polygon boundary for each query point."""
    best = np.full(len(points), np.inf)
    out = np.array(points, dtype=np.float64)
    n = len(poly)
    for i in range(n):
        a = np.asarray(poly[i], dtype=np.float64)
        b = np.asarray(poly[(i + 1) % n], dtype=np.float64)
        ab = b - a
        t = np.clip(((points - a) @ ab) / max(ab @ ab, 1e-300), 0.0, 1.0)
        proj = a + t[:, None] * ab
        d = np.linalg.norm(points - proj, axis=1)
        better = d < best
        best[better] = d[better]
        out[better] = proj[better]
    return out


def _carve(base: Mesh, inside_fn, project_fn, tag: BoundaryTag,
           min_loop_edges: int = 8, min_angle: float = DEFAULT_MIN_ANGLE_DEG,
           keep_parent: bool = True) -> Mesh:
    """Remove the region where inside_fn is true and snap the new boundary.

    Triangles with any strictly-inside node or an inside centroid are removed;
    new boundary-loop nodes are moved by project_fn onto the exact curve.
    """
    node_inside = inside_fn(base.nodes)
    cent_inside = inside_fn(base.triangle_centroids)
    kill = node_inside[base.triangles].any(axis=1) | cent_inside
    if not kill.any():
        raise ResolutionError(
            "no mesh entity falls inside the region to remove; refine the mesh"
        )
    keep = ~kill
    tris_kept = base.triangles[keep]
    used = np.zeros(base.num_nodes, dtype=bool)
    used[tris_kept.ravel()] = True
    if node_inside[used].any():
        # an inside node survived in a kept triangle: region is under-resolved
        raise ResolutionError("removed region is not resolved by the mesh; refine")

    old_edges = {(int(a), int(b)): int(t) for (a, b), t in zip(base.boundary_edges, base.boundary_tags)}
    new_edge_arr = boundary_edges_from_triangles(tris_kept)
    edges, tags = [], []
    loop_nodes = set()
    for a, b in new_edge_arr:
        key = (int(a), int(b))
        if key in old_edges:
            edges.append(key)
            tags.append(old_edges[key])
        else:
            edges.append(key)
            tags.append(int(tag))
            loop_nodes.update(key)
    if sum(1 for t in tags if t == int(tag)) < min_loop_edges:
        raise ResolutionError(
            f"new boundary loop has fewer than {min_loop_edges} edges; refine the mesh"
        )

    nodes = np.array(base.nodes)
    loop_idx = np.array(sorted(loop_nodes), dtype=np.int64)
    target = project_fn(nodes[loop_idx])
    # blend back towards the original position if snapping inverts a triangle
    blend = np.ones(len(loop_idx))
    orig = nodes[loop_idx].copy()
    for _ in range(6):
        nodes[loop_idx] = orig + blend[:, None] * (target - orig)
        areas = _signed_areas(nodes, tris_kept)
        if areas.min() > 0:
            break
        bad = np.unique(tris_kept[areas <= 0].ravel())
        mask = np.isin(loop_idx, bad)
        blend[mask] *= 0.5
    else:
        raise ResolutionError("cannot snap new boundary onto the curve; refine the mesh")

    # one Laplacian pass on interior neighbours of the new loop, quality permitting
    m = _compact(nodes, tris_kept, edges, tags,
                 base.parent_nodes if keep_parent else None, base.num_nodes)
    if m.min_angle_deg() < min_angle:
        m = _smooth_near(m, tag, min_angle)
    if m.min_angle_deg() < min_angle:
        raise MeshQualityError(
            f"minimum angle {m.min_angle_deg():.2f} deg below floor {min_angle} deg "
            "after carving; refine the mesh"
        )
    return m


def _compact(nodes, tris, edges, tags, parent, n_old):
    used = np.zeros(n_old, dtype=bool)
    used[np.asarray(tris).ravel()] = True
    remap = -np.ones(n_old, dtype=np.int64)
    remap[used] = np.arange(used.sum())
    new_tris = remap[tris]
    new_edges = np.array([[remap[a], remap[b]] for a, b in edges], dtype=np.int64)
    keep_ids = np.nonzero(used)[0]
    new_parent = keep_ids if parent is None else np.asarray(parent)[keep_ids]
    return Mesh(nodes[used], new_tris, new_edges, np.array(tags), parent_nodes=new_parent)


def _smooth_near(mesh: Mesh, tag: BoundaryTag, min_angle: float) -> Mesh:
    """Laplacian-smooth interior nodes adjacent to the tagged loop."""
    loop = set(mesh.boundary_nodes(tag).tolist())
    fixed = set(mesh.boundary_nodes().tolist())
    ring = set()
    for t in mesh.triangles:
        t = [int(v) for v in t]
        if any(v in loop for v in t):
            ring.update(v for v in t if v not in fixed)
    if not ring:
        return mesh
    neigh = {v: set() for v in ring}
    for t in mesh.triangles:
        t = [int(v) for v in t]
        for k in range(3):
            if t[k] in neigh:
                neigh[t[k]].update((t[(k + 1) % 3], t[(k + 2) % 3]))
    nodes = np.array(mesh.nodes)
    for _ in range(3):
        new = nodes.copy()
        for v in sorted(ring):
            nb = sorted(neigh[v])
            new[v] = nodes[nb].mean(axis=0)
        areas = _signed_areas(new, mesh.triangles)
        if areas.min() <= 0:
            break
        nodes = new
        trial = Mesh(nodes, mesh.triangles, mesh.boundary_edges, mesh.boundary_tags,
                     parent_nodes=mesh.parent_nodes)
        if trial.min_angle_deg() >= min_angle:
            return trial
    return Mesh(nodes, mesh.triangles, mesh.boundary_edges, mesh.boundary_tags,
                parent_nodes=mesh.parent_nodes)


def _carve_disk(base, center, radius, tag, min_loop_edges=8):
    cx, cy = center

    def inside(p):
        return np.hypot(p[:, 0] - cx, p[:, 1] - cy) < radius * (1 - 1e-12)

    def project(p):
        d = p - np.array([cx, cy])
        r = np.maximum(np.hypot(d[:, 0], d[:, 1]), 1e-300)
        return np.array([cx, cy]) + radius * d / r[:, None]

    return _carve(base, inside, project, tag, min_loop_edges=min_loop_edges)


def _carve_polygon(base, poly, tag):
    def inside(p):
        return _point_in_polygon(p, poly)

    def project(p):
        return _project_to_polygon(p, poly)

    return _carve(base, inside, project, tag)


def punch_hole(mesh: Mesh, hole: HoleSpec,
               min_angle: float = DEFAULT_MIN_ANGLE_DEG) -> Mesh:
    """Remove the disk hole.center + eps*B from the mesh; new loop tagged HOLE.

    The hole must lie strictly inside the domain, away from every existing
    boundary, and be resolved by at least 8 boundary edges.
    """
    cx, cy = hole.center
    eps = hole.eps
    # the hole must keep clear of all existing boundaries
    for a, b in mesh.boundary_edges:
        if _segment_distance(mesh.nodes[a], mesh.nodes[b], (cx, cy)) <= eps:
            raise GeometryError("hole intersects or touches an existing boundary")
    d_nodes = np.hypot(mesh.nodes[:, 0] - cx, mesh.nodes[:, 1] - cy)
    d_cents = np.hypot(
        mesh.triangle_centroids[:, 0] - cx, mesh.triangle_centroids[:, 1] - cy
    )
    if not ((d_nodes < eps).any() or (d_cents < eps).any()):
        raise ResolutionError(
            f"hole radius {eps:g} is below the local mesh resolution; refine the mesh"
        )
    return _carve_disk(mesh, (cx, cy), eps, BoundaryTag.HOLE)


def _segment_distance(a, b, p):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


# ---------------------------------------------------------------------------
# deformation
# ---------------------------------------------------------------------------


def deform(mesh: Mesh, velocity: VelocityField, t: float) -> Mesh:
    """Move every node x to x + t*V(x); connectivity and tags are unchanged."""
    disp = velocity.at_nodes(mesh)
    if t != 0.0:
        e = _unique_edges(mesh.triangles)
        dx = mesh.nodes[e[:, 1]] - mesh.nodes[e[:, 0]]
        dv = disp[e[:, 1]] - disp[e[:, 0]]
        lengths = np.hypot(dx[:, 0], dx[:, 1])
        lip = float((np.hypot(dv[:, 0], dv[:, 1]) / lengths).max()) if len(e) else 0.0
        if abs(t) * lip >= 1.0:
            raise DeformationError(
                f"|t|*Lip(V) = {abs(t) * lip:.3f} >= 1: map may not be injective"
            )
    new_nodes = mesh.nodes + t * disp
    areas = _signed_areas(new_nodes, mesh.triangles)
    if areas.size and areas.min() <= 0:
        worst = int(np.argmin(areas))
        raise DeformationError(
            f"deformation inverts triangle {worst} (area {areas.min():.3e})",
            worst_triangle=worst,
        )
    return Mesh(new_nodes, mesh.triangles, mesh.boundary_edges, mesh.boundary_tags,
                parent_nodes=mesh.parent_nodes)


# ---------------------------------------------------------------------------
# boundary geometry
# ---------------------------------------------------------------------------


def boundary_geometry(mesh: Mesh, tag: BoundaryTag) -> BoundaryGeometry:
    """Outward unit normals, edge lengths and per-node normals of a boundary.

    Outward means pointing out of the computational domain: away from the
    domain on OUTER, into the obstacle on OBSTACLE, into the hole on HOLE.
    Node normals are the length-weighted average of the two adjacent edge
    normals (the angle-weighted average for arcs), normalized.
    """
    edges = mesh.edges_of(tag)
    vec = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
    lengths = np.hypot(vec[:, 0], vec[:, 1])
    # interior on the left of the edge direction: outward normal is the
    # direction rotated by -90 degrees
    normals = np.column_stack([vec[:, 1], -vec[:, 0]]) / lengths[:, None]
    loops = _order_loops(edges)
    node_ids = np.unique(edges)
    pos = {int(v): k for k, v in enumerate(node_ids)}
    acc = np.zeros((len(node_ids), 2))
    weights = np.zeros(len(node_ids))
    for (a, b), n, ln in zip(edges, normals, lengths):
        for v in (int(a), int(b)):
            acc[pos[v]] += 0.5 * ln * n
            weights[pos[v]] += 0.5 * ln
    norm = np.linalg.norm(acc, axis=1)
    node_normals = acc / np.where(norm > 0, norm, 1.0)[:, None]
    return BoundaryGeometry(
        tag=tag,
        edges=edges,
        edge_normals=normals,
        edge_lengths=lengths,
        node_ids=node_ids,
        node_normals=node_normals,
        node_weights=weights,
        loops=loops,
    )


# ---------------------------------------------------------------------------
# named deformation fields
# ---------------------------------------------------------------------------


def translation_field(dx: float = 1.0, dy: float = 0.0) -> VelocityField:
    d = np.array([dx, dy], dtype=np.float64)
    return VelocityField.analytic(lambda p: np.broadcast_to(d, p.shape).copy(),
                                  name=f"translate({dx:g},{dy:g})")


def dilation_field(center: Sequence[float] = (0.0, 0.0)) -> VelocityField:
    c = np.asarray(center, dtype=np.float64)
    return VelocityField.analytic(lambda p: p - c, name=f"dilate@{tuple(c)}")


def rotation_field(center: Sequence[float] = (0.0, 0.0)) -> VelocityField:
    c = np.asarray(center, dtype=np.float64)

    def fn(p):
        q = p - c
        return np.column_stack([-q[:, 1], q[:, 0]])

    return VelocityField.analytic(fn, name=f"rotate@{tuple(c)}")


def radial_bump_field(center: Sequence[float], r0: float, width: float) -> VelocityField:
    """Unit radial direction modulated by a Gaussian in (r - r0)."""
    c = np.asarray(center, dtype=np.float64)

    def fn(p):
        q = p - c
        r = np.maximum(np.hypot(q[:, 0], q[:, 1]), 1e-12)
        amp = np.exp(-(((r - r0) / width) ** 2))
        return amp[:, None] * q / r[:, None]

    return VelocityField.analytic(fn, name=f"radial_bump(r0={r0:g},w={width:g})")


def normal_bump_field(center: Sequence[float], width: float) -> VelocityField:
    """Radial Gaussian bump centred at a point (used to nudge nearby boundary)."""
    c = np.asarray(center, dtype=np.float64)

    def fn(p):
        q = p - c
        r = np.maximum(np.hypot(q[:, 0], q[:, 1]), 1e-12)
        amp = np.exp(-((r / width) ** 2))
        return amp[:, None] * q / r[:, None]

    return VelocityField.analytic(fn, name=f"normal_bump@{tuple(c)}")
