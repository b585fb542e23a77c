"""Gmsh MSH 2.2 import/export and VTK legacy export.

Supported volumetric elements: tet4 (Gmsh type 4, VTK 10) and hex8
(Gmsh type 5, VTK 12).  Triangles (2) and quads (3) become boundary
facets; their first tag is the boundary marker.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .mesh import HEX8, TET4, Mesh

_GMSH_VOLUME = {4: (TET4, 4), 5: (HEX8, 8)}
_GMSH_FACET = {2: 3, 3: 4}
_VTK_CELL_TYPE = {TET4: 10, HEX8: 12}
_GMSH_TYPE_OF_KIND = {TET4: 4, HEX8: 5}


def read_gmsh(path) -> Mesh:
    """Parse an ASCII Gmsh MSH 2.2 file into a Mesh."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]

    def fail(msg, ln):
        raise ParseError(msg, str(path), ln + 1)

    idx = 0

    def expect_section(name):
        nonlocal idx
        while idx < len(lines) and not lines[idx].strip():
            idx += 1
        if idx >= len(lines) or lines[idx].strip() != name:
            fail(f"expected {name}", min(idx, len(lines) - 1))
        idx += 1

    expect_section("$MeshFormat")
    fmt = lines[idx].split()
    if not fmt or not fmt[0].startswith("2.2"):
        fail(f"unsupported MSH version {fmt[0] if fmt else '?'} (need 2.2 ASCII)", idx)
    if len(fmt) >= 2 and fmt[1] != "0":
        fail("binary MSH files are not supported", idx)
    idx += 1
    expect_section("$EndMeshFormat")

    expect_section("$Nodes")
    try:
        n_nodes = int(lines[idx])
    except (ValueError, IndexError):
        fail("malformed node count", idx)
    idx += 1
    coords = np.empty((n_nodes, 3))
    id_to_row: dict[int, int] = {}
    for row in range(n_nodes):
        parts = lines[idx].split()
        if len(parts) != 4:
            fail(f"malformed node line {lines[idx]!r}", idx)
        try:
            node_id = int(parts[0])
            coords[row] = [float(p) for p in parts[1:]]
        except ValueError:
            fail(f"malformed node line {lines[idx]!r}", idx)
        id_to_row[node_id] = row
        idx += 1
    expect_section("$EndNodes")

    expect_section("$Elements")
    try:
        n_elems = int(lines[idx])
    except (ValueError, IndexError):
        fail("malformed element count", idx)
    idx += 1
    kind = None
    cells: list[list[int]] = []
    facets: list[list[int]] = []
    markers: list[int] = []
    for _ in range(n_elems):
        parts = lines[idx].split()
        if len(parts) < 3:
            fail(f"malformed element line {lines[idx]!r}", idx)
        try:
            etype = int(parts[1])
            ntags = int(parts[2])
            tags = [int(t) for t in parts[3 : 3 + ntags]]
            node_ids = [int(t) for t in parts[3 + ntags :]]
        except ValueError:
            fail(f"malformed element line {lines[idx]!r}", idx)
        try:
            nodes = [id_to_row[i] for i in node_ids]
        except KeyError as exc:
            fail(f"element references unknown node {exc.args[0]}", idx)
        if etype in _GMSH_VOLUME:
            ekind, width = _GMSH_VOLUME[etype]
            if len(nodes) != width:
                fail(f"{ekind} element needs {width} nodes, got {len(nodes)}", idx)
            if kind is None:
                kind = ekind
            elif kind != ekind:
                fail("mixed volumetric element kinds are not supported", idx)
            cells.append(nodes)
        elif etype in _GMSH_FACET:
            if len(nodes) != _GMSH_FACET[etype]:
                fail("boundary element node count mismatch", idx)
            facets.append(nodes)
            markers.append(tags[0] if tags else 0)
        elif etype == 15:
            pass  # point elements carry no mesh data
        else:
            fail(f"unsupported element type {etype}", idx)
        idx += 1
    expect_section("$EndElements")

    if kind is None:
        raise ParseError("no volumetric elements found", str(path), len(lines))
    facet_width = 3 if kind == TET4 else 4
    for f in facets:
        if len(f) != facet_width:
            raise ParseError(
                f"boundary facet width {len(f)} does not match {kind}", str(path), 0
            )
    return Mesh(
        coords,
        np.asarray(cells, dtype=np.int64),
        kind,
        np.asarray(facets, dtype=np.int64).reshape(-1, facet_width),
        np.asarray(markers, dtype=np.int64),
    )


def write_gmsh(mesh: Mesh, path) -> None:
    """Write a Mesh as ASCII MSH 2.2 (volume cells + marked facets)."""
    facet_type = 2 if mesh.kind == TET4 else 3
    cell_type = _GMSH_TYPE_OF_KIND[mesh.kind]
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{mesh.n_vertices}\n")
        for i, (x, y, z) in enumerate(mesh.vertices, start=1):
            fh.write(f"{i} {x:.17g} {y:.17g} {z:.17g}\n")
        fh.write("$EndNodes\n")
        n_elems = mesh.n_cells + len(mesh.boundary_facets)
        fh.write(f"$Elements\n{n_elems}\n")
        eid = 1
        for facet, marker in zip(mesh.boundary_facets, mesh.boundary_markers):
            nodes = " ".join(str(v + 1) for v in facet)
            fh.write(f"{eid} {facet_type} 2 {marker} {marker} {nodes}\n")
            eid += 1
        for cell in mesh.cells:
            nodes = " ".join(str(v + 1) for v in cell)
            fh.write(f"{eid} {cell_type} 2 0 0 {nodes}\n")
            eid += 1
        fh.write("$EndElements\n")


def write_vtk(mesh: Mesh, nodal_fields, path, title: str = "nndiff output") -> None:
    """Write a legacy ASCII VTK unstructured grid with point scalars.

    ``nodal_fields`` maps field names to per-vertex arrays.  Output is
    formatted with %.17g, so identical inputs produce identical files.
    """
    nodal_fields = dict(nodal_fields or {})
    for name, values in nodal_fields.items():
        if len(values) != mesh.n_vertices:
            raise ValueError(
                f"field {name!r} has {len(values)} values for "
                f"{mesh.n_vertices} vertices"
            )
    width = mesh.cells.shape[1]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        fh.write(f"CELLS {mesh.n_cells} {mesh.n_cells * (width + 1)}\n")
        for cell in mesh.cells:
            fh.write(f"{width} " + " ".join(str(v) for v in cell) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        vtk_type = _VTK_CELL_TYPE[mesh.kind]
        for _ in range(mesh.n_cells):
            fh.write(f"{vtk_type}\n")
        if nodal_fields:
            fh.write(f"POINT_DATA {mesh.n_vertices}\n")
            for name, values in nodal_fields.items():
                fh.write(f"SCALARS {name} double 1\n")
                fh.write("LOOKUP_TABLE default\n")
                for v in np.asarray(values, dtype=np.float64):
                    fh.write(f"{v:.17g}\n")
