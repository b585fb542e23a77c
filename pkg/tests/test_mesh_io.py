import numpy as np
import pytest

from nndiff.errors import ParseError
from nndiff.mesh import cell_volumes, generate_box, generate_cube_with_hole
from nndiff.mesh_io import read_gmsh, write_gmsh, write_vtk

SINGLE_TET_MSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
5
1 2 2 7 1 1 3 2
2 2 2 7 1 1 2 4
3 2 2 7 1 2 3 4
4 2 2 7 1 1 4 3
5 4 2 0 1 1 2 3 4
$EndElements
"""


class TestReadGmsh:
    def test_single_tet(self, tmp_path):
        path = tmp_path / "tet.msh"
        path.write_text(SINGLE_TET_MSH)
        mesh = read_gmsh(path)
        assert mesh.n_cells == 1
        assert mesh.n_vertices == 4
        assert mesh.kind == "tet4"
        assert set(mesh.boundary_markers) == {7}
        mesh.validate()

    def test_roundtrip_box(self, tmp_path):
        m = generate_box(2, 2, 2, "tet4")
        path = tmp_path / "box.msh"
        write_gmsh(m, path)
        again = read_gmsh(path)
        assert again.n_vertices == 27
        assert again.n_cells == m.n_cells
        assert np.allclose(cell_volumes(again).sum(), 1.0)
        again.validate()

    def test_roundtrip_hole_markers(self, tmp_path):
        m = generate_cube_with_hole(9, "hex8")
        path = tmp_path / "hole.msh"
        write_gmsh(m, path)
        again = read_gmsh(path)
        assert (again.boundary_markers == 2).sum() == 6

    def test_noncontiguous_node_ids(self, tmp_path):
        path = tmp_path / "ids.msh"
        path.write_text(
            """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
10 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
1
1 4 2 0 1 10 2 3 4
$EndElements
"""
        )
        mesh = read_gmsh(path)
        assert mesh.n_cells == 1
        assert mesh.n_vertices == 4

    def test_unsupported_element_type_names_line(self, tmp_path):
        path = tmp_path / "bad.msh"
        path.write_text(
            """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
1
1 0 0 0
$EndNodes
$Elements
1
1 6 2 0 1 1 1 1 1 1 1
$EndElements
"""
        )
        with pytest.raises(ParseError, match="unsupported element type 6") as err:
            read_gmsh(path)
        assert err.value.line == 10

    def test_mixed_kinds_rejected(self, tmp_path):
        path = tmp_path / "mixed.msh"
        path.write_text(
            """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
8
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
5 0 0 1
6 1 0 1
7 1 1 1
8 0 1 1
$EndNodes
$Elements
2
1 4 2 0 1 1 2 3 5
2 5 2 0 1 1 2 3 4 5 6 7 8
$EndElements
"""
        )
        with pytest.raises(ParseError, match="mixed volumetric"):
            read_gmsh(path)

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "v4.msh"
        path.write_text("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n")
        with pytest.raises(ParseError, match="2.2"):
            read_gmsh(path)


class TestWriteVtk:
    def test_hex_cell_type_12(self, tmp_path):
        m = generate_box(1, 1, 1, "hex8")
        path = tmp_path / "hex.vtk"
        write_vtk(m, {}, path)
        text = path.read_text()
        assert text.startswith("# vtk DataFile Version 3.0\n")
        assert "DATASET UNSTRUCTURED_GRID" in text
        section = text.split("CELL_TYPES 1\n")[1]
        assert section.splitlines()[0] == "12"

    def test_tet_cell_type_10(self, tmp_path):
        m = generate_box(1, 1, 1, "tet4")
        path = tmp_path / "tet.vtk"
        write_vtk(m, {"c": np.zeros(m.n_vertices)}, path)
        text = path.read_text()
        assert "CELL_TYPES 6" in text
        assert "\n10\n" in text
        assert "POINT_DATA 8" in text
        assert "SCALARS c double 1" in text

    def test_deterministic_output(self, tmp_path):
        m = generate_box(2, 2, 2, "tet4")
        field = {"c": np.linspace(0.0, 1.0, m.n_vertices)}
        p1, p2 = tmp_path / "a.vtk", tmp_path / "b.vtk"
        write_vtk(m, field, p1)
        write_vtk(m, field, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_field_length_checked(self, tmp_path):
        m = generate_box(1, 1, 1, "hex8")
        with pytest.raises(ValueError, match="field 'c'"):
            write_vtk(m, {"c": np.zeros(3)}, tmp_path / "x.vtk")
