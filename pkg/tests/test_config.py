import numpy as np
import pytest

from nndiff.config import (
    RunConfig,
    build_bc,
    build_diffusivity,
    build_envelope,
    build_mesh,
    build_transient_config,
    parse_config_text,
)
from nndiff.errors import ConfigError, ParseError
from nndiff.fem import dispersion_tensor, DispersionParams
from nndiff.mesh import generate_box
from nndiff.mesh_io import write_gmsh


class TestParser:
    def test_sections_and_types(self):
        text = """
        # comment
        [alpha]
        name = "value"  # trailing comment
        count = 3
        rate = 1.5e-3
        flag = true
        items = [1, 2.5, "x"]

        [alpha.sub]
        7 = 0.25
        """
        out = parse_config_text(text)
        assert out["alpha"]["name"] == "value"
        assert out["alpha"]["count"] == 3
        assert out["alpha"]["rate"] == 1.5e-3
        assert out["alpha"]["flag"] is True
        assert out["alpha"]["items"] == [1, 2.5, "x"]
        assert out["alpha"]["sub"]["7"] == 0.25

    def test_duplicate_key_rejected(self):
        with pytest.raises(ParseError):
            parse_config_text("[a]\nx = 1\nx = 2\n")

    def test_malformed_line_names_line_number(self):
        with pytest.raises(ParseError) as err:
            parse_config_text("[a]\njust words\n")
        assert err.value.line == 2

    def test_bad_value(self):
        with pytest.raises(ParseError):
            parse_config_text("[a]\nx = oops\n")

    def test_unterminated_section(self):
        with pytest.raises(ParseError):
            parse_config_text("[a\nx = 1\n")


MINIMAL = """
[mesh]
generator = "box"
nx = 2
ny = 2
nz = 2
kind = "hex8"

[physics]
mode = "constant"
tensor = [1.0, 2.0, 3.0]

[bc.dirichlet]
1 = 0.0
"""


class TestSchema:
    def test_minimal_accepted(self):
        run = RunConfig.from_raw(parse_config_text(MINIMAL))
        assert run.transient is None

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown config section"):
            RunConfig.from_raw(parse_config_text(MINIMAL + "\n[extra]\nx = 1\n"))

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.from_raw(parse_config_text(MINIMAL + "\n[solver]\nfoo = 1\n"))

    def test_missing_required_section(self):
        with pytest.raises(ConfigError, match="missing required"):
            RunConfig.from_raw(parse_config_text("[mesh]\ngenerator = \"box\"\n"))


class TestBuilders:
    def test_box_mesh(self):
        run = RunConfig.from_raw(parse_config_text(MINIMAL))
        mesh = build_mesh(run.mesh)
        assert mesh.kind == "hex8"
        assert mesh.n_cells == 8

    def test_refine(self):
        cfg = dict(generator="box", nx=1, ny=1, nz=1, kind="tet4", refine=1)
        assert build_mesh(cfg).n_cells == 48

    def test_mesh_from_file(self, tmp_path):
        write_gmsh(generate_box(2, 2, 2, "tet4"), tmp_path / "m.msh")
        mesh = build_mesh({"generator": "file", "path": "m.msh"}, base_dir=tmp_path)
        assert mesh.n_vertices == 27

    def test_constant_diffusivity_diagonal(self):
        mesh = generate_box(1, 1, 1, "tet4")
        field = build_diffusivity({"mode": "constant", "tensor": [1.0, 2.0, 3.0]}, mesh)
        d = field.evaluate(np.zeros((1, 3)))[0]
        assert np.array_equal(d, np.diag([1.0, 2.0, 3.0]))

    def test_constant_diffusivity_full(self):
        mesh = generate_box(1, 1, 1, "tet4")
        entries = [2.0, 0.1, 0.0, 0.1, 1.0, 0.0, 0.0, 0.0, 0.5]
        field = build_diffusivity({"mode": "constant", "tensor": entries}, mesh)
        assert np.array_equal(
            field.evaluate(np.zeros((1, 3)))[0], np.array(entries).reshape(3, 3)
        )

    def test_dispersion_constant_velocity(self):
        mesh = generate_box(1, 1, 1, "tet4")
        cfg = {
            "mode": "dispersion", "alpha_l": 1.0, "alpha_t": 0.001, "d_m": 0.0,
            "velocity": [1.0, 1.0, 1.0],
        }
        field = build_diffusivity(cfg, mesh)
        expected = dispersion_tensor([1, 1, 1], DispersionParams(1.0, 0.001, 0.0))
        assert np.allclose(field.evaluate(np.zeros((1, 3)))[0], expected)

    def test_dispersion_velocity_file(self, tmp_path):
        mesh = generate_box(1, 1, 1, "tet4")  # 6 cells
        rows = np.tile([0.0, 0.0, 2.0], (mesh.n_cells, 1))
        np.savetxt(tmp_path / "v.txt", rows)
        cfg = {
            "mode": "dispersion", "alpha_l": 0.5, "alpha_t": 0.1, "d_m": 0.0,
            "velocity_file": "v.txt",
        }
        field = build_diffusivity(cfg, mesh, base_dir=tmp_path)
        d = field.evaluate(np.zeros((2, 3)), cells=[0, 5])
        assert np.allclose(d[0], np.diag([0.2, 0.2, 1.0]))

    def test_velocity_file_length_checked(self, tmp_path):
        mesh = generate_box(1, 1, 1, "tet4")
        np.savetxt(tmp_path / "v.txt", np.ones((2, 3)))
        cfg = {"mode": "dispersion", "alpha_l": 1.0, "velocity_file": "v.txt"}
        with pytest.raises(ConfigError, match="velocity file"):
            build_diffusivity(cfg, mesh, base_dir=tmp_path)

    def test_bc_tables(self):
        spec = build_bc({"dirichlet": {"1": 0.0, "2": 1.0}, "neumann": {"3": 0.5}})
        assert spec.dirichlet == {1: 0.0, 2: 1.0}
        assert spec.neumann == {3: 0.5}

    def test_bc_conflicting_marker_named(self):
        with pytest.raises(ConfigError, match="marker 2"):
            build_bc({"dirichlet": {"2": 0.0}, "neumann": {"2": 1.0}})

    def test_transient_config_defaults(self):
        run = RunConfig.from_raw(parse_config_text(MINIMAL))
        tcfg = build_transient_config(run)
        assert tcfg.steady
        assert tcfg.solver == "galerkin"
        assert tcfg.rtol == 1e-6

    def test_solver_spec_with_inner_tolerance(self):
        run = RunConfig.from_raw(parse_config_text(MINIMAL))
        tcfg = build_transient_config(run, solver_override="tron:1e-3")
        assert tcfg.solver == "tron"
        assert tcfg.inner_rtol == 1e-3

    def test_transient_section(self):
        text = MINIMAL + "\n[transient]\ndt = 0.2\nn_steps = 10\n"
        run = RunConfig.from_raw(parse_config_text(text))
        tcfg = build_transient_config(run)
        assert not tcfg.steady
        assert tcfg.dt == 0.2
        assert tcfg.n_steps == 10
        assert tcfg.initial_value == 1e-8

    def test_envelope(self):
        text = MINIMAL + "\n[perf]\ntpp = 9.2e9\nstreams_bw = 5.65e9\n"
        run = RunConfig.from_raw(parse_config_text(text))
        env = build_envelope(run)
        assert env.tpp == 9.2e9
        assert build_envelope(RunConfig.from_raw(parse_config_text(MINIMAL))) is None


class TestBundledConfigs:
    def test_all_bundled_configs_validate(self):
        from importlib.resources import files

        config_dir = files("nndiff") / "configs"
        names = [p.name for p in config_dir.iterdir() if p.name.endswith(".toml")]
        assert len(names) >= 6
        for name in names:
            raw = parse_config_text((config_dir / name).read_text(), name)
            run = RunConfig.from_raw(raw)
            build_bc(run.bc)
            build_transient_config(run)
            assert build_envelope(run) is not None, name
