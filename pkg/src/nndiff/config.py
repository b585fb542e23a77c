"""Experiment configuration: a small TOML-style grammar plus builders.

Grammar (documented here and in the README):

* ``[section]`` / ``[section.sub]`` headers; one level of nesting.
* ``key = value`` pairs; keys are bare identifiers or bare integers
  (integer keys name boundary markers).
* values: double-quoted strings, integers, floats (scientific notation
  allowed), ``true``/``false``, and flat arrays ``[v1, v2, ...]``.
* ``#`` starts a comment; blank lines ignored.

Unknown sections or keys are rejected before any computation runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .fem import DiffusivityField, DispersionParams
from .mesh import BoundarySpec, Mesh, generate_box, generate_cube_with_hole, refine_uniform
from .mesh_io import read_gmsh
from .perf import PerfEnvelope
from .transient import SOLVER_CHOICES, TransientConfig

# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _parse_scalar(token: str, path: str, ln: int):
    token = token.strip()
    if not token:
        raise ParseError("empty value", path, ln)
    if token.startswith('"'):
        if not (token.endswith('"') and len(token) >= 2):
            raise ParseError(f"unterminated string {token!r}", path, ln)
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"cannot parse value {token!r}", path, ln)


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out).strip()


def parse_config_text(text: str, path: str = "<config>") -> dict:
    """Parse the grammar above into nested dicts."""
    root: dict = {}
    current = root
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {line!r}", path, ln)
            name = line[1:-1].strip()
            if not name:
                raise ParseError("empty section name", path, ln)
            current = root
            for part in name.split("."):
                if not part:
                    raise ParseError(f"malformed section name {name!r}", path, ln)
                nxt = current.setdefault(part, {})
                if not isinstance(nxt, dict):
                    raise ParseError(f"section {name!r} collides with a key", path, ln)
                current = nxt
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", path, ln)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or " " in key:
            raise ParseError(f"malformed key {key!r}", path, ln)
        if key in current:
            raise ParseError(f"duplicate key {key!r}", path, ln)
        if value.startswith("["):
            if not value.endswith("]"):
                raise ParseError("arrays must close on the same line", path, ln)
            body = value[1:-1].strip()
            items = [s for s in (part.strip() for part in body.split(",")) if s]
            current[key] = [_parse_scalar(s, path, ln) for s in items]
        else:
            current[key] = _parse_scalar(value, path, ln)
    return root


def load_config_file(path) -> dict:
    text = Path(path).read_text()
    return parse_config_text(text, str(path))


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

_SCHEMA = {
    "mesh": {"generator", "n", "nx", "ny", "nz", "kind", "path", "refine"},
    "physics": {
        "mode", "alpha_l", "alpha_t", "d_m", "velocity", "velocity_file",
        "tensor", "source",
    },
    "bc": {"dirichlet", "neumann"},
    "solver": {"choice", "rtol", "inner_rtol", "max_iter", "precond"},
    "transient": {"dt", "n_steps", "initial_value"},
    "bounds": {"c_min", "c_max"},
    "perf": {"tpp", "streams_bw"},
    "output": {"vtk", "report", "csv", "cadence"},
    "compare": {"solvers"},
}


def _check_schema(raw: dict) -> None:
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"[{section}] must be a section, not a key")
        if section == "bc":
            for sub, table in content.items():
                if sub not in _SCHEMA["bc"]:
                    raise ConfigError(f"unknown config section [bc.{sub}]")
                if not isinstance(table, dict):
                    raise ConfigError(f"[bc.{sub}] must be a marker table")
            continue
        for key in content:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")


@dataclass
class RunConfig:
    """Validated experiment definition."""

    mesh: dict
    physics: dict
    bc: dict
    solver: dict = field(default_factory=dict)
    transient: dict | None = None
    bounds: dict = field(default_factory=dict)
    perf: dict | None = None
    output: dict = field(default_factory=dict)
    compare: dict | None = None

    @classmethod
    def from_raw(cls, raw: dict) -> "RunConfig":
        _check_schema(raw)
        for required in ("mesh", "physics", "bc"):
            if required not in raw:
                raise ConfigError(f"missing required config section [{required}]")
        return cls(
            mesh=raw["mesh"],
            physics=raw["physics"],
            bc=raw["bc"],
            solver=raw.get("solver", {}),
            transient=raw.get("transient"),
            bounds=raw.get("bounds", {}),
            perf=raw.get("perf"),
            output=raw.get("output", {}),
            compare=raw.get("compare"),
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_raw(load_config_file(path))


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_mesh(cfg: dict, base_dir: Path | None = None) -> Mesh:
    generator = cfg.get("generator", "file" if "path" in cfg else None)
    if generator is None:
        raise ConfigError("[mesh] needs a generator or a path")
    kind = cfg.get("kind", "tet4")
    if generator == "box":
        mesh = generate_box(cfg.get("nx", 1), cfg.get("ny", 1), cfg.get("nz", 1), kind)
    elif generator == "cube_with_hole":
        if "n" not in cfg:
            raise ConfigError("[mesh] cube_with_hole needs n")
        mesh = generate_cube_with_hole(cfg["n"], kind)
    elif generator == "file":
        if "path" not in cfg:
            raise ConfigError("[mesh] generator 'file' needs a path")
        path = Path(cfg["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        mesh = read_gmsh(path)
    else:
        raise ConfigError(f"unknown mesh generator {generator!r}")
    for _ in range(int(cfg.get("refine", 0))):
        mesh = refine_uniform(mesh)
    return mesh


def build_diffusivity(cfg: dict, mesh: Mesh, base_dir: Path | None = None) -> DiffusivityField:
    mode = cfg.get("mode", "constant")
    if mode == "constant":
        tensor = cfg.get("tensor")
        if tensor is None:
            raise ConfigError("[physics] constant mode needs a tensor")
        t = np.asarray(tensor, dtype=np.float64)
        if t.size == 3:
            t = np.diag(t)
        elif t.size == 9:
            t = t.reshape(3, 3)
        else:
            raise ConfigError("[physics] tensor must have 3 or 9 entries")
        return DiffusivityField.constant(t)
    if mode == "dispersion":
        params = DispersionParams(
            alpha_l=float(cfg.get("alpha_l", 0.0)),
            alpha_t=float(cfg.get("alpha_t", 0.0)),
            d_m=float(cfg.get("d_m", 0.0)),
        )
        if "velocity_file" in cfg:
            path = Path(cfg["velocity_file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            velocity = np.loadtxt(path, dtype=np.float64, ndmin=2)
            if velocity.shape != (mesh.n_cells, 3):
                raise ConfigError(
                    f"velocity file has shape {velocity.shape}, "
                    f"expected ({mesh.n_cells}, 3)"
                )
        elif "velocity" in cfg:
            velocity = np.asarray(cfg["velocity"], dtype=np.float64)
            if velocity.shape != (3,):
                raise ConfigError("[physics] velocity must have 3 components")
        else:
            raise ConfigError("[physics] dispersion mode needs velocity or velocity_file")
        return DiffusivityField.dispersion(params, velocity)
    raise ConfigError(f"unknown physics mode {mode!r}")


def build_bc(cfg: dict) -> BoundarySpec:
    def marker_table(table: dict) -> dict:
        out = {}
        for key, value in table.items():
            try:
                marker = int(key)
            except ValueError:
                raise ConfigError(f"boundary marker {key!r} is not an integer")
            if not isinstance(value, (int, float)):
                raise ConfigError(f"boundary value for marker {key} must be a number")
            out[marker] = float(value)
        return out

    return BoundarySpec(
        dirichlet=marker_table(cfg.get("dirichlet", {})),
        neumann=marker_table(cfg.get("neumann", {})),
    )


def build_transient_config(run: RunConfig, solver_override: str | None = None,
                           rtol: float | None = None,
                           inner_rtol: float | None = None) -> TransientConfig:
    solver_cfg = run.solver
    choice = solver_override or solver_cfg.get("choice", "galerkin")
    inner = inner_rtol if inner_rtol is not None else solver_cfg.get("inner_rtol", 1e-2)
    if ":" in str(choice):
        name, _, tail = str(choice).partition(":")
        choice = name
        inner = float(tail)
    if choice not in SOLVER_CHOICES:
        raise ConfigError(f"unknown solver {choice!r}; use {SOLVER_CHOICES}")
    bounds = run.bounds
    transient = run.transient
    return TransientConfig(
        dt=float(transient["dt"]) if transient and "dt" in transient else 1.0,
        n_steps=int(transient.get("n_steps", 1)) if transient else 1,
        steady=transient is None,
        c_min=float(bounds.get("c_min", 0.0)),
        c_max=float(bounds.get("c_max", 1.0)),
        initial_value=float(transient.get("initial_value", 1e-8)) if transient else 1e-8,
        solver=choice,
        rtol=float(rtol if rtol is not None else solver_cfg.get("rtol", 1e-6)),
        inner_rtol=float(inner),
        max_iter=solver_cfg.get("max_iter"),
        precond=solver_cfg.get("precond"),
    )


def build_envelope(run: RunConfig) -> PerfEnvelope | None:
    if not run.perf:
        return None
    try:
        return PerfEnvelope(
            tpp=float(run.perf["tpp"]), streams_bw=float(run.perf["streams_bw"])
        )
    except KeyError as exc:
        raise ConfigError(f"[perf] missing {exc.args[0]!r}")
