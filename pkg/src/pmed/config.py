"""Run configuration files.

Line-oriented ``key = value`` text with ``#`` comments. Presets are written
as calls, e.g. ``init = barenblatt(t0=1, mass=1)`` or
``drift = constant(c=[0.5, 0])``; arguments are Python literals.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from . import defaults, drift as drift_mod
from .errors import ValidationError
from .functionals import lambda_q
from .grid import DensityField, box_grid
from .splitting import TRANSPORT_MODES, SplittingConfig

__all__ = ["Preset", "RunConfig", "parse_config", "serialize_config", "build_grid", "build_initial", "build_drift"]

INIT_PRESETS = {
    "barenblatt": {"t0": 1.0, "mass": 1.0},
    "gaussian": {"sigma": 0.3, "mass": 1.0},
    "indicator": {"r": 0.5, "mass": 1.0},
    "from_file": {"path": ""},
}
DRIFT_PRESETS = {
    "zero": {},
    "constant": {"c": None},
    "rotation": {"omega": 1.0},
    "linear": {"A": None},
    "identity": {"scale": 1.0},
    "shear": {"rate": 1.0},
}


@dataclass(frozen=True)
class Preset:
    name: str
    args: tuple = ()

    @property
    def kwargs(self) -> dict:
        return dict(self.args)

    def render(self) -> str:
        inner = ", ".join(f"{k}={_literal(v)}" for k, v in self.args)
        return f"{self.name}({inner})"


def _literal(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_literal(x) for x in v) + "]"
    return repr(v)


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    if isinstance(v, int) and not isinstance(v, bool):
        return float(v)
    return v


def parse_preset(text: str, table: dict, what: str) -> Preset:
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse {what} preset {text!r}") from exc
    if isinstance(node, ast.Name):
        name, kwargs = node.id, {}
    elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.args:
        name = node.func.id
        try:
            kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in node.keywords}
        except ValueError as exc:
            raise ValidationError(f"{what} arguments must be literals: {text!r}") from exc
    else:
        raise ValidationError(f"{what} preset must look like name(key=value, ...), got {text!r}")
    if name not in table:
        raise ValidationError(f"unknown {what} preset {name!r} (known: {', '.join(table)})")
    allowed = table[name]
    unknown = set(kwargs) - set(allowed)
    if unknown:
        raise ValidationError(f"unknown argument(s) {sorted(unknown)} for {what} preset {name}")
    merged = {k: v for k, v in allowed.items() if v is not None}
    merged.update(kwargs)
    missing = [k for k, v in allowed.items() if v is None and k not in merged]
    if missing:
        raise ValidationError(f"{what} preset {name} needs {missing}")
    return Preset(name, tuple((k, _freeze(merged[k])) for k in sorted(merged)))


@dataclass(frozen=True)
class RunConfig:
    m: float = 2.0
    q: tuple = (2.0,)
    p: float = 2.0
    T: float = 1.0
    n: int = 8
    transport_mode: str = "semi_lagrangian"
    cfl_safety: float = defaults.CFL_SAFETY
    output_times: tuple = ()
    strang: bool = False
    flow_substeps: int = defaults.FLOW_SUBSTEPS
    d: int = 1
    cells: int = 128
    half_width: float = 4.0
    center: tuple = ()
    init: Preset = Preset("barenblatt", (("mass", 1.0), ("t0", 1.0)))
    drift: Preset = Preset("zero")
    output_dir: str = "out"
    seed: int = 0

    def splitting(self) -> SplittingConfig:
        return SplittingConfig(
            m=self.m,
            T=self.T,
            n=self.n,
            q_list=self.q,
            p=self.p,
            transport_mode=self.transport_mode,
            cfl_safety=self.cfl_safety,
            output_times=self.output_times,
            strang=self.strang,
            flow_substeps=self.flow_substeps,
        )

    def validate(self):
        """Hypothesis checks; raises naming the violated inequality."""
        if not self.m > 1:
            raise ValidationError(f"requires m > 1, got m={self.m:g}")
        if not self.q or any(not q >= 1 for q in self.q):
            raise ValidationError(f"requires q >= 1, got q={list(self.q)}")
        if not self.p > 1:
            raise ValidationError(f"requires p > 1, got p={self.p:g}")
        q0 = self.q[0]
        lam = lambda_q(self.m, q0, max(self.d, 1))
        if self.p > lam + 1e-12:
            raise ValidationError(
                f"requires p <= lambda_q = min(2, 1+(d(q-1)+q)/(d(m-1)+q)) = {lam:.6g} "
                f"for m={self.m:g}, q={q0:g}, d={self.d}; got p={self.p:g}"
            )
        if not self.T > 0:
            raise ValidationError(f"requires T > 0, got T={self.T:g}")
        if self.n < 1:
            raise ValidationError(f"requires n >= 1, got n={self.n}")
        if self.d not in (1, 2):
            raise ValidationError(f"requires d in {{1, 2}}, got d={self.d}")
        if self.cells < 4:
            raise ValidationError(f"requires cells >= 4, got cells={self.cells}")
        if not self.half_width > 0:
            raise ValidationError(f"requires half_width > 0, got {self.half_width:g}")
        if self.center and len(self.center) != self.d:
            raise ValidationError(f"center needs {self.d} coordinates")
        if self.transport_mode not in TRANSPORT_MODES:
            raise ValidationError(f"transport_mode must be one of {TRANSPORT_MODES}")
        if not (0 < self.cfl_safety <= 1):
            raise ValidationError(f"requires 0 < cfl_safety <= 1, got {self.cfl_safety:g}")
        if self.flow_substeps < 1:
            raise ValidationError("requires flow_substeps >= 1")
        if self.init.name == "barenblatt" and not self.init.kwargs["t0"] > 0:
            raise ValidationError("barenblatt init requires t0 > 0")
        if self.init.name == "gaussian" and not self.init.kwargs["sigma"] > 0:
            raise ValidationError("gaussian init requires sigma > 0")
        if self.init.name == "indicator" and not self.init.kwargs["r"] > 0:
            raise ValidationError("indicator init requires r > 0")
        if self.init.name == "from_file" and not self.init.kwargs["path"]:
            raise ValidationError("from_file init requires a path")
        if self.drift.name in ("rotation", "shear") and self.d != 2:
            raise ValidationError(f"{self.drift.name} drift requires d = 2")
        return self


# key -> (parser, renderer)
def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(s):
    f = float(s)
    if f != int(f):
        raise ValueError("not an integer")
    return int(f)


def _floats(s):
    s = s.strip().strip("[]")
    return tuple(_float(x) for x in s.replace(",", " ").split()) if s.strip() else ()


def _bool(s):
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("not a boolean")


def _str(s):
    return s.strip()


def _choice(*options):
    def parse(s):
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {options}")
        return s

    return parse


KEYS = {
    "m": _float,
    "q": _floats,
    "p": _float,
    "T": _float,
    "n": _int,
    "transport_mode": _choice(*TRANSPORT_MODES),
    "cfl_safety": _float,
    "output_times": _floats,
    "strang": _bool,
    "flow_substeps": _int,
    "d": _int,
    "cells": _int,
    "half_width": _float,
    "center": _floats,
    "init": lambda s: parse_preset(s, INIT_PRESETS, "init"),
    "drift": lambda s: parse_preset(s, DRIFT_PRESETS, "drift"),
    "output_dir": _str,
    "seed": _int,
}
TYPE_NAMES = {
    "m": "a real number", "q": "a list of reals", "p": "a real number", "T": "a real number",
    "n": "an integer", "cfl_safety": "a real number", "output_times": "a list of reals",
    "strang": "a boolean", "flow_substeps": "an integer", "d": "an integer", "cells": "an integer",
    "half_width": "a real number", "center": "a list of reals", "seed": "an integer",
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate; errors carry the offending line number."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key](value)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
        except (ValueError, TypeError) as exc:
            expected = TYPE_NAMES.get(key, "a valid value")
            raise ValidationError(f"line {lineno}: {key} must be {expected}, got {value!r} ({exc})") from exc
        lines[key] = lineno
    cfg = RunConfig(**values)
    try:
        cfg.validate()
    except ValidationError as exc:
        where = _blame(str(exc), lines)
        raise ValidationError(f"line {where}: {exc}" if where else str(exc)) from exc
    return cfg


def _blame(message: str, lines: dict):
    """Best line to attribute a hypothesis failure to."""
    for key in ("p", "m", "q", "T", "n", "d", "cells", "half_width", "center", "transport_mode", "cfl_safety",
                "flow_substeps", "init", "drift"):
        token = f"got {key}=" if len(key) == 1 else key
        if token in message and key in lines:
            return lines[key]
    for key in ("init", "drift"):
        if key in message and key in lines:
            return lines[key]
    return None


def _render(key, v):
    if isinstance(v, Preset):
        return v.render()
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Every field in declaration order; ``parse_config`` inverts it."""
    return "".join(f"{f.name} = {_render(f.name, getattr(cfg, f.name))}\n" for f in fields(cfg))


# --- builders -------------------------------------------------------------------


def build_grid(cfg: RunConfig):
    return box_grid(cfg.d, cfg.cells, cfg.half_width)


def _center(cfg):
    return np.asarray(cfg.center, dtype=float) if cfg.center else np.zeros(cfg.d)


def build_initial(cfg: RunConfig) -> DensityField:
    from .pme import barenblatt
    from .snapshot import read_snapshot

    grid = build_grid(cfg)
    args = cfg.init.kwargs
    c = _center(cfg)
    if cfg.init.name == "barenblatt":
        return barenblatt(cfg.d, cfg.m, args["t0"], args["mass"], center=c, grid=grid)
    if cfg.init.name == "gaussian":
        r = grid.radius(c)
        sigma = args["sigma"]
        v = np.exp(-0.5 * (r / sigma) ** 2)
        v[r > 5 * sigma] = 0.0
        return DensityField(grid, v * args["mass"] / (v.sum() * grid.cell_volume))
    if cfg.init.name == "indicator":
        v = (grid.radius(c) <= args["r"]).astype(float)
        if not v.any():
            raise ValidationError("indicator radius is smaller than the grid resolution")
        return DensityField(grid, v * args["mass"] / (v.sum() * grid.cell_volume))
    field_ = read_snapshot(args["path"])
    if not isinstance(field_, DensityField):
        raise ValidationError(f"{args['path']} holds a scalar field, not a density")
    return field_


def build_drift(cfg: RunConfig):
    args = cfg.drift.kwargs
    name = cfg.drift.name
    if name == "zero":
        return drift_mod.zero(cfg.d)
    if name == "constant":
        c = np.atleast_1d(np.asarray(args["c"], dtype=float))
        if len(c) != cfg.d:
            raise ValidationError(f"constant drift needs {cfg.d} components, got {len(c)}")
        return drift_mod.constant(c)
    if name == "rotation":
        return drift_mod.rotation(args["omega"])
    if name == "linear":
        A = np.atleast_2d(np.asarray(args["A"], dtype=float))
        if A.shape != (cfg.d, cfg.d):
            raise ValidationError(f"linear drift needs a {cfg.d}x{cfg.d} matrix")
        return drift_mod.linear(A)
    if name == "identity":
        return drift_mod.identity(cfg.d, args["scale"])
    return drift_mod.shear(args["rate"])


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes).validate()
