"""Flat ``key = value`` experiment configuration files.

Blank lines and anything after ``#`` are ignored.  Lists are comma
separated.  Unknown keys are an error so typos do not silently fall back to
defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .. import geometry
from ..assembly import FormConfig
from ..exceptions import ConfigError

GEOMETRIES = ("ring", "ellipse", "circle", "affine")
SOLUTIONS = ("default", "ring", "cosine", "affine")


@dataclass
class ExperimentConfig:
    geometry: str = "ring"
    r_inner: float = 0.25
    r_outer: float = 0.75
    semi_axes: tuple = (0.75, 0.5)
    center: tuple = (0.0, 0.0)
    radius: float = 0.5
    normal: tuple = (0.0, 1.0)
    offset: float = 0.0
    translation: tuple = (0.0, 0.0)
    solution: str = "default"
    solution_coeffs: tuple = (1.0, 0.5, -0.25)
    box: tuple = (-1.0, 1.0, -1.0, 1.0)
    order: int = 2
    method: str = "symmetric"
    k: int = 1
    nu_source: str = "facet"
    beta: float = 100.0
    gamma_j: float = 0.1
    levels: tuple = (16, 32, 64, 128)
    solver: str = "direct"
    solver_tol: float = 1e-10
    csv: str = "convergence.csv"
    plot: str = "convergence"
    mesh_dump: bool = False
    matrix_dump: bool = False
    condition: bool = False
    condition_level: int = 32
    condition_offsets: int = 16
    exact_domain_error: bool = True
    record_time: bool = True
    name: str = field(default="experiment")

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if self.solution not in SOLUTIONS:
            raise ConfigError(f"solution must be one of {SOLUTIONS}, got {self.solution!r}")
        if self.order not in (1, 2, 3):
            raise ConfigError(f"order must be 1, 2 or 3, got {self.order}")
        if not self.levels:
            raise ConfigError("levels must not be empty")
        if any(b <= a for a, b in zip(self.levels[:-1], self.levels[1:])):
            raise ConfigError(f"levels must be strictly increasing, got {self.levels}")
        if min(self.levels) < 1:
            raise ConfigError("levels must be positive")
        if self.solver not in ("direct", "gmres"):
            raise ConfigError(f"solver must be 'direct' or 'gmres', got {self.solver!r}")
        if len(self.box) != 4 or self.box[0] >= self.box[1] or self.box[2] >= self.box[3]:
            raise ConfigError(f"box must be xmin, xmax, ymin, ymax, got {self.box}")
        self.form_config().check_order(self.order)

    def form_config(self):
        k = 0 if self.method == "exact_boundary" else self.k
        return FormConfig(self.method, k, self.beta, self.gamma_j, self.nu_source)

    def levelset(self):
        t = tuple(self.translation)
        if self.geometry == "ring":
            ls = geometry.Ring(translation=t, r_inner=self.r_inner, r_outer=self.r_outer)
        elif self.geometry == "ellipse":
            ls = geometry.Ellipse(translation=t, semi_axes=tuple(self.semi_axes))
        elif self.geometry == "circle":
            ls = geometry.Circle(translation=t, center=tuple(self.center), radius=self.radius)
        else:
            ls = geometry.Affine(translation=t, normal=tuple(self.normal), offset=self.offset)
        return ls.with_solution(self._solution())

    def _solution(self):
        kind = self.solution
        if kind == "default":
            kind = "ring" if self.geometry == "ring" else "cosine"
        if kind == "ring":
            if self.geometry != "ring":
                raise ConfigError("the ring solution only fits the ring geometry")
            return geometry.ring_solution(self.r_inner, self.r_outer)
        if kind == "cosine":
            return geometry.cosine_solution()
        return geometry.affine_solution(self.solution_coeffs)

    def dumps(self):
        lines = [f"# {self.name}"]
        for f in fields(self):
            if f.name == "name":
                continue
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return str(value)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_INT_TUPLES = {"levels"}


def _convert(key, raw):
    typ = _TYPES[key]
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "tuple":
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            conv = int if key in _INT_TUPLES else float
            return tuple(conv(p) for p in parts)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config(text, name="experiment"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES or key == "name":
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return ExperimentConfig(name=name, **values)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    return parse_config(text, name=path.stem)


RING_P2 = """\
# ring (R - 1/4)(R - 3/4) < 0, u = 20 (3/4 - R)(R - 1/4), source extended by zero
geometry = ring
r_inner = 0.25
r_outer = 0.75
box = -1, 1, -1, 1
order = 2
method = symmetric
k = 1
beta = 100
gamma_j = 0.1
levels = 16, 32, 64, 128
csv = ring_p2.csv
plot = ring_p2
"""

ELLIPSE_P3 = """\
# ellipse x^2/(3/4)^2 + y^2/(1/2)^2 < 1, u = g = cos(pi x/2) cos(pi y/2)
geometry = ellipse
semi_axes = 0.75, 0.5
box = -1, 1, -1, 1
order = 3
method = symmetric
k = 1
beta = 100
gamma_j = 0.1
levels = 16, 32, 64, 128
csv = ellipse_p3.csv
plot = ellipse_p3
"""

DEMOS = {"ring_p2": RING_P2, "ellipse_p3": ELLIPSE_P3}
