"""Run configuration: TOML parsing, schema validation and object construction.

Every problem found in a config file is collected before raising, so a
single ConfigError lists all offending paths at once.
"""

import csv
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import density as dens
from .errors import ConfigError
from .oracle import DEFAULT_DIM_CAP, RULES

DENSITY_KINDS = ("canon", "example210", "tabulated")
PROFILES = ("smooth", "gaussian")
VECTOR_KINDS = ("sqrt_psi", "kappa_zero")
SYMBOLIC_LAMBDAS = ("lambda_c", "lambda_c0")

LambdaEntry = Union[float, str]


@dataclass(frozen=True)
class DensityConfig:
    kind: str = "canon"
    dim: Optional[int] = None
    mass: Optional[float] = None
    profile: Optional[str] = None
    path: Optional[str] = None


@dataclass(frozen=True)
class VectorConfig:
    kind: str = "sqrt_psi"
    scale: float = 1.0


@dataclass(frozen=True)
class DispersionConfig:
    s_min: float = 1e-6
    s_max: float = 1e4
    n_s: int = 200
    lam: Optional[float] = None


@dataclass(frozen=True)
class OracleConfig:
    enabled: bool = False
    n: Tuple[int, ...] = (250, 500)
    rule: str = "gauss_transformed"
    n_c: int = 0
    dim_cap: int = DEFAULT_DIM_CAP
    omega: Optional[Tuple[float, ...]] = None
    g: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class WitnessConfig:
    enabled: bool = False
    lam: Optional[float] = None
    delta: Optional[float] = None
    eps: Optional[float] = None
    n_max: int = 1_000_000
    rows: int = 200


@dataclass(frozen=True)
class RunConfig:
    density: DensityConfig = DensityConfig()
    lambdas: Tuple[LambdaEntry, ...] = (1.0,)
    eta: float = 0.0
    vector: Optional[VectorConfig] = None
    rel_tol: float = 1e-10
    n_report: int = 8
    dispersion: DispersionConfig = DispersionConfig()
    oracle: OracleConfig = OracleConfig()
    witness: WitnessConfig = WitnessConfig()
    out_dir: str = "out"
    curves: bool = True
    base_dir: str = field(default=".", compare=False)

    def echo(self) -> Dict[str, Any]:
        """Plain-data view of the config for the report."""
        out = asdict(self)
        out.pop("base_dir")
        out.pop("out_dir")
        out["lambda"] = list(out.pop("lambdas"))
        return out


class _Collector:
    def __init__(self):
        self.problems: List[Tuple[str, str]] = []

    def add(self, path, why):
        self.problems.append((path, why))

    def table(self, raw, path, allowed):
        if raw is None:
            return {}
        if not isinstance(raw, dict):
            self.add(path, "must be a table")
            return {}
        for key in raw:
            if key not in allowed:
                self.add(f"{path}.{key}" if path else key, "unknown key")
        return raw

    def number(self, raw, path, default, *, positive=False, nonneg=False):
        if path.split(".")[-1] not in raw:
            return default
        v = raw[path.split(".")[-1]]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.add(path, "must be a finite number")
            return default
        if positive and not v > 0:
            self.add(path, "must be positive")
            return default
        if nonneg and v < 0:
            self.add(path, "must be nonnegative")
            return default
        return float(v)

    def integer(self, raw, path, default, *, minimum=1):
        key = path.split(".")[-1]
        if key not in raw:
            return default
        v = raw[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.add(path, "must be an integer")
            return default
        if v < minimum:
            self.add(path, f"must be at least {minimum}")
            return default
        return v

    def flag(self, raw, path, default):
        key = path.split(".")[-1]
        if key not in raw:
            return default
        v = raw[key]
        if not isinstance(v, bool):
            self.add(path, "must be true or false")
            return default
        return v

    def choice(self, raw, path, default, options):
        key = path.split(".")[-1]
        if key not in raw:
            return default
        v = raw[key]
        if v not in options:
            self.add(path, f"must be one of {', '.join(options)}")
            return default
        return v


def _lambda_list(raw, c: _Collector) -> Tuple[LambdaEntry, ...]:
    if "lambda" not in raw:
        return (1.0,)
    v = raw["lambda"]
    items = v if isinstance(v, list) else [v]
    if not items:
        c.add("lambda", "must not be empty")
        return ()
    out = []
    for i, x in enumerate(items):
        path = f"lambda[{i}]" if isinstance(v, list) else "lambda"
        if isinstance(x, str):
            if x not in SYMBOLIC_LAMBDAS:
                c.add(path, f"string values must be one of {', '.join(SYMBOLIC_LAMBDAS)}")
            else:
                out.append(x)
        elif isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            c.add(path, "must be a finite number or a critical-coupling name")
        else:
            out.append(float(x))
    return tuple(out)


def _float_list(raw, path, c: _Collector, *, positive=False):
    key = path.split(".")[-1]
    if key not in raw:
        return None
    v = raw[key]
    if not isinstance(v, list) or not v:
        c.add(path, "must be a nonempty list of numbers")
        return None
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            c.add(f"{path}[{i}]", "must be a finite number")
        elif positive and not x > 0:
            c.add(f"{path}[{i}]", "must be positive")
        else:
            out.append(float(x))
    return tuple(out)


def parse_config(raw: Dict[str, Any], base_dir: str = ".") -> RunConfig:
    """Validate a parsed TOML document and build a RunConfig."""
    c = _Collector()
    top = c.table(
        raw,
        "",
        {"lambda", "eta", "n_report", "density", "vector", "quadrature", "dispersion",
         "oracle", "witness", "output"},
    )

    if "density" not in top:
        c.add("density", "is required")
    dt = c.table(top.get("density"), "density", {"kind", "dim", "mass", "profile", "path"})
    kind = c.choice(dt, "density.kind", None, DENSITY_KINDS)
    if dt and "kind" not in dt:
        c.add("density.kind", "is required")
    dcfg = DensityConfig()
    if kind == "canon":
        for extra in ("dim", "mass", "profile", "path"):
            if extra in dt:
                c.add(f"density.{extra}", "not used by the canon density")
        dcfg = DensityConfig(kind="canon")
    elif kind == "example210":
        if "path" in dt:
            c.add("density.path", "not used by example210")
        for req in ("dim", "mass"):
            if req not in dt:
                c.add(f"density.{req}", "is required for example210")
        dim = c.integer(dt, "density.dim", 3)
        mass = c.number(dt, "density.mass", 0.0, nonneg=True)
        profile = c.choice(dt, "density.profile", "smooth", PROFILES)
        dcfg = DensityConfig(kind="example210", dim=dim, mass=mass, profile=profile)
    elif kind == "tabulated":
        for extra in ("dim", "mass", "profile"):
            if extra in dt:
                c.add(f"density.{extra}", "not used by a tabulated density")
        path = dt.get("path")
        if not isinstance(path, str) or not path:
            c.add("density.path", "a CSV path is required for a tabulated density")
        elif not (Path(base_dir) / path).is_file():
            c.add("density.path", f"file not found: {path}")
        dcfg = DensityConfig(kind="tabulated", path=path if isinstance(path, str) else None)

    lambdas = _lambda_list(top, c)
    eta = c.number(top, "eta", 0.0)
    n_report = c.integer(top, "n_report", 8, minimum=0)

    vcfg = None
    if "vector" in top:
        vt = c.table(top["vector"], "vector", {"kind", "scale"})
        vcfg = VectorConfig(
            kind=c.choice(vt, "vector.kind", "sqrt_psi", VECTOR_KINDS),
            scale=c.number(vt, "vector.scale", 1.0),
        )
    if eta != 0.0 and vcfg is None:
        c.add("vector", "is required when eta is nonzero")

    qt = c.table(top.get("quadrature"), "quadrature", {"rel_tol"})
    rel_tol = c.number(qt, "quadrature.rel_tol", 1e-10, positive=True)
    if rel_tol >= 1e-2:
        c.add("quadrature.rel_tol", "must be below 1e-2")
        rel_tol = 1e-10

    st = c.table(top.get("dispersion"), "dispersion", {"s_min", "s_max", "n_s", "lambda"})
    s_min = c.number(st, "dispersion.s_min", 1e-6, positive=True)
    s_max = c.number(st, "dispersion.s_max", 1e4, positive=True)
    if s_max <= s_min:
        c.add("dispersion.s_max", "must exceed dispersion.s_min")
    disp = DispersionConfig(
        s_min=s_min,
        s_max=s_max,
        n_s=c.integer(st, "dispersion.n_s", 200, minimum=2),
        lam=c.number(st, "dispersion.lambda", None) if "lambda" in st else None,
    )

    ot = c.table(
        top.get("oracle"), "oracle", {"enabled", "n", "rule", "n_c", "dim_cap", "omega", "g"}
    )
    n_list = (250, 500)
    if "n" in ot:
        v = ot["n"]
        if not isinstance(v, list) or not v:
            c.add("oracle.n", "must be a nonempty list of positive integers")
        else:
            good = []
            for i, x in enumerate(v):
                if isinstance(x, bool) or not isinstance(x, int) or x < 1:
                    c.add(f"oracle.n[{i}]", "must be a positive integer")
                else:
                    good.append(x)
            n_list = tuple(good)
    omega = _float_list(ot, "oracle.omega", c, positive=True)
    g = _float_list(ot, "oracle.g", c)
    if (omega is None) != (g is None):
        c.add("oracle.omega" if omega is None else "oracle.g", "omega and g must be given together")
    elif omega is not None and len(omega) != len(g):
        c.add("oracle.g", "must have the same length as oracle.omega")
    elif omega is not None and any(b <= a for a, b in zip(omega, omega[1:])):
        c.add("oracle.omega", "must be strictly increasing")
    orc = OracleConfig(
        enabled=c.flag(ot, "oracle.enabled", bool(ot)),
        n=n_list,
        rule=c.choice(ot, "oracle.rule", "gauss_transformed", RULES),
        n_c=c.integer(ot, "oracle.n_c", 0, minimum=0),
        dim_cap=c.integer(ot, "oracle.dim_cap", DEFAULT_DIM_CAP),
        omega=omega,
        g=g,
    )

    wt = c.table(
        top.get("witness"), "witness", {"enabled", "lambda", "delta", "eps", "n_max", "rows"}
    )
    wit = WitnessConfig(
        enabled=c.flag(wt, "witness.enabled", bool(wt)),
        lam=c.number(wt, "witness.lambda", None) if "lambda" in wt else None,
        delta=c.number(wt, "witness.delta", None, positive=True) if "delta" in wt else None,
        eps=c.number(wt, "witness.eps", None, positive=True) if "eps" in wt else None,
        n_max=c.integer(wt, "witness.n_max", 1_000_000),
        rows=c.integer(wt, "witness.rows", 200, minimum=2),
    )
    if wit.eps is not None and not wit.eps < 1.0:
        c.add("witness.eps", "must lie in (0, 1)")

    out_t = c.table(top.get("output"), "output", {"dir", "curves"})
    out_dir = out_t.get("dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        c.add("output.dir", "must be a nonempty string")
        out_dir = "out"
    curves = c.flag(out_t, "output.curves", True)

    if c.problems:
        raise ConfigError(c.problems)
    return RunConfig(
        density=dcfg,
        lambdas=lambdas,
        eta=eta,
        vector=vcfg,
        rel_tol=rel_tol,
        n_report=n_report,
        dispersion=disp,
        oracle=orc,
        witness=wit,
        out_dir=out_dir,
        curves=curves,
        base_dir=base_dir,
    )


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([("<file>", f"config file not found: {path}")]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([("<file>", f"invalid TOML: {exc}")]) from None
    return parse_config(raw, base_dir=str(path.parent))


def _gaussian_profile(r):
    r = np.asarray(r, dtype=float)
    return np.exp(-r * r)


def build_density(cfg: RunConfig) -> dens.SpectralDensity:
    dc = cfg.density
    if dc.kind == "canon":
        return dens.canon()
    if dc.kind == "example210":
        v = dens.smooth_profile if dc.profile == "smooth" else _gaussian_profile
        return dens.example_density(
            dc.dim, dc.mass, v, label=f"example210(d={dc.dim}, m={dc.mass:g}, {dc.profile})"
        )
    return read_table(Path(cfg.base_dir) / dc.path)


def read_table(path: Path) -> dens.SpectralDensity:
    """Two-column CSV (mu, psi); a non-numeric first row is taken as a header."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not x.strip() for x in row):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ConfigError([("density.path", f"row {i + 1} of {path.name} is not numeric")])
    mu, psi = zip(*rows) if rows else ((), ())
    try:
        return dens.tabulated_density(mu, psi, label=f"tabulated({path.name})")
    except ValueError as exc:
        raise ConfigError([("density.path", str(exc))]) from None


def build_vector(cfg: RunConfig, d: dens.SpectralDensity) -> Optional[dens.GeneralizedVector]:
    """f = scale * sqrt(psi), or its kappa-free variant sqrt(psi) * (mu - c)."""
    vc = cfg.vector
    if vc is None:
        return None
    scale = vc.scale
    if vc.kind == "sqrt_psi":
        return dens.GeneralizedVector(
            lambda m: scale * np.sqrt(d(m)), label=f"{scale:g}*sqrt(psi)"
        )
    # kappa = int psi (mu - c) / mu = ||g||^2 - c ||T^{-1/2} g||^2
    centre = dens.moment(d, "one") / dens.moment(d, "inverse")
    return dens.GeneralizedVector(
        lambda m: scale * np.sqrt(d(m)) * (np.asarray(m, dtype=float) - centre),
        label=f"{scale:g}*sqrt(psi)*(mu - {centre:.17g})",
    )
