"""Gmsh MSH v2 ASCII import and legacy VTK ASCII export."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ParseError
from .mesh import BoundaryTag, Mesh, boundary_edges_from_triangles


def import_msh(path: str, tag_map: Optional[Mapping[int, BoundaryTag]] = None) -> Mesh:
    """Read an MSH v2 ASCII file.

    Element type 1 (2-node line) carries boundary tags; the first physical
    tag is mapped to a BoundaryTag through tag_map (default: everything is
    OUTER). Element type 2 (3-node triangle) builds the mesh; other types
    are ignored.
    """
    tag_map = dict(tag_map or {})
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]

    def fail(msg, i, section=None):
        raise ParseError(f"{path}:{i + 1}: {msg}", line=i + 1, section=section)

    i = 0
    node_ids: dict[int, int] = {}
    nodes: list[tuple[float, float]] = []
    tris: list[tuple[int, int, int]] = []
    line_elems: list[tuple[int, int, int]] = []  # (a, b, physical)
    seen_nodes = seen_elems = False
    while i < len(lines):
        ln = lines[i].strip()
        if ln == "$Nodes":
            seen_nodes = True
            if i + 1 >= len(lines):
                fail("truncated file in section $Nodes", i, "$Nodes")
            try:
                count = int(lines[i + 1])
            except ValueError:
                fail("expected node count", i + 1, "$Nodes")
            if i + 1 + count >= len(lines):
                fail("truncated file in section $Nodes", i, "$Nodes")
            for k in range(count):
                parts = lines[i + 2 + k].split()
                if len(parts) < 4:
                    fail("malformed node line", i + 2 + k, "$Nodes")
                node_ids[int(parts[0])] = len(nodes)
                nodes.append((float(parts[1]), float(parts[2])))
            i += 2 + count
            if i >= len(lines) or lines[i].strip() != "$EndNodes":
                fail("missing $EndNodes", min(i, len(lines) - 1), "$Nodes")
        elif ln == "$Elements":
            seen_elems = True
            if i + 1 >= len(lines):
                fail("truncated file in section $Elements", i, "$Elements")
            try:
                count = int(lines[i + 1])
            except ValueError:
                fail("expected element count", i + 1, "$Elements")
            if i + 1 + count >= len(lines):
                fail("truncated file in section $Elements", i, "$Elements")
            for k in range(count):
                parts = lines[i + 2 + k].split()
                if len(parts) < 3:
                    fail("malformed element line", i + 2 + k, "$Elements")
                etype = int(parts[1])
                ntags = int(parts[2])
                body = parts[3 + ntags:]
                phys = int(parts[3]) if ntags >= 1 else 0
                if etype == 1:
                    if len(body) != 2:
                        fail("line element needs 2 nodes", i + 2 + k, "$Elements")
                    line_elems.append((int(body[0]), int(body[1]), phys))
                elif etype == 2:
                    if len(body) != 3:
                        fail("triangle element needs 3 nodes", i + 2 + k, "$Elements")
                    tris.append(tuple(int(b) for b in body))
            i += 2 + count
            if i >= len(lines) or lines[i].strip() != "$EndElements":
                fail("missing $EndElements", min(i, len(lines) - 1), "$Elements")
        i += 1

    if not seen_nodes:
        raise ParseError(f"{path}: no $Nodes section found", section="$Nodes")
    if not seen_elems:
        raise ParseError(f"{path}: no $Elements section found", section="$Elements")
    if not tris:
        raise ParseError(f"{path}: no triangles in file", section="$Elements")

    coords = np.asarray(nodes, dtype=np.float64)
    try:
        triangles = np.array(
            [[node_ids[a], node_ids[b], node_ids[c]] for a, b, c in tris], dtype=np.int64
        )
    except KeyError as exc:
        raise ParseError(f"{path}: element references unknown node {exc}") from exc
    # enforce CCW orientation
    p = coords[triangles]
    areas = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    flip = areas < 0
    triangles[flip] = triangles[flip][:, ::-1]

    edges = boundary_edges_from_triangles(triangles)
    # tag boundary edges from the file's line elements where available
    phys_of = {}
    for a, b, phys in line_elems:
        try:
            key = frozenset((node_ids[a], node_ids[b]))
        except KeyError as exc:
            raise ParseError(f"{path}: line element references unknown node {exc}") from exc
        phys_of[key] = phys
    tags = np.full(len(edges), int(BoundaryTag.OUTER))
    for k, (a, b) in enumerate(edges):
        phys = phys_of.get(frozenset((int(a), int(b))))
        if phys is not None and phys in tag_map:
            tags[k] = int(tag_map[phys])
    return Mesh(coords, triangles, edges, tags)


def export_vtk(mesh: Mesh, fields: Optional[Mapping[str, np.ndarray]], path: str,
               title: str = "helmshape output") -> None:
    """Write a legacy ASCII VTK unstructured grid with point-data arrays.

    Scalar fields are (n,) arrays, vector fields (n, 2); vectors are padded
    with a zero z-component.
    """
    fields = dict(fields or {})
    n, m = mesh.num_nodes, mesh.num_triangles
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{x!r} {y!r} 0.0\n")
        fh.write(f"CELLS {m} {4 * m}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {m}\n")
        for _ in range(m):
            fh.write("5\n")
        if fields:
            fh.write(f"POINT_DATA {n}\n")
            for name, values in fields.items():
                values = np.asarray(values, dtype=np.float64)
                safe = name.replace(" ", "_")
                if values.ndim == 1:
                    fh.write(f"SCALARS {safe} double 1\n")
                    fh.write("LOOKUP_TABLE default\n")
                    for v in values:
                        fh.write(f"{v!r}\n")
                else:
                    fh.write(f"VECTORS {safe} double\n")
                    for vx, vy in values:
                        fh.write(f"{vx!r} {vy!r} 0.0\n")


def export_msh(mesh: Mesh, path: str,
               tag_phys: Optional[Mapping[BoundaryTag, int]] = None) -> None:
    """Write an MSH v2 ASCII file (inverse of import_msh, used for round trips)."""
    tag_phys = dict(tag_phys or {t: int(t) for t in BoundaryTag})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{mesh.num_nodes}\n")
        for k, (x, y) in enumerate(mesh.nodes, start=1):
            fh.write(f"{k} {x!r} {y!r} 0.0\n")
        fh.write("$EndNodes\n")
        total = mesh.num_triangles + len(mesh.boundary_edges)
        fh.write(f"$Elements\n{total}\n")
        eid = 1
        for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags):
            phys = tag_phys[BoundaryTag(int(t))]
            fh.write(f"{eid} 1 2 {phys} {phys} {a + 1} {b + 1}\n")
            eid += 1
        for a, b, c in mesh.triangles:
            fh.write(f"{eid} 2 2 0 0 {a + 1} {b + 1} {c + 1}\n")
            eid += 1
        fh.write("$EndElements\n")
