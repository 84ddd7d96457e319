"""Spectral densities of the coupling vector and the checks they must pass.

Everything downstream sees the free operator as multiplication by ``mu`` on
``[e0, inf)`` and the coupling vector through its density ``psi(mu)``.
"""

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma as _gamma

from . import quadrature
from .errors import DivergenceError, DomainError, EvaluationError, InputError

WEIGHTS = (
    "one",
    "linear",
    "inverse",
    "inverse_sq",
    "inv_gap",
    "shale_pair",
    "inv_sq_shift",
)


def _as_array_fn(fn):
    """Wrap a scalar-only callable so that it also accepts arrays."""

    def wrapped(x):
        x = np.asarray(x, dtype=float)
        try:
            y = np.asarray(fn(x), dtype=float)
            if y.shape == x.shape:
                return y
        except (TypeError, ValueError):
            pass
        return np.vectorize(lambda s: float(fn(float(s))), otypes=[float])(x)

    return wrapped


@dataclass(frozen=True)
class SpectralDensity:
    """Density ``psi`` of ``d||E(mu) g||^2`` on ``(e0, inf)``.

    ``breakpoints`` lists interior points where ``psi`` is known not to be
    smooth, so that integrators split there.  Instances are immutable; the
    moment cache only ever memoizes pure results.
    """

    e0: float
    psi: Callable
    psi_prime: Optional[Callable] = None
    label: str = ""
    tabulated: bool = False
    breakpoints: Tuple[float, ...] = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if not callable(self.psi):
            raise InputError("psi must be callable")
        if self.psi_prime is not None and not callable(self.psi_prime):
            raise InputError("psi_prime must be callable or None")
        e0 = float(self.e0)
        if not (math.isfinite(e0) and e0 >= 0.0):
            raise InputError(f"e0 must be a finite nonnegative number, got {self.e0!r}")
        object.__setattr__(self, "e0", e0)

    def __call__(self, mu):
        """Evaluate psi, returning 0 below the threshold."""
        mu = np.asarray(mu, dtype=float)
        inside = mu > self.e0
        out = np.zeros_like(mu)
        if np.any(inside):
            out[inside] = _as_array_fn(self.psi)(mu[inside])
        return out if out.ndim else float(out)

    def value(self, mu: float) -> float:
        """Scalar evaluation that rejects NaN and infinities."""
        if not mu > self.e0:
            return 0.0
        y = float(self.psi(mu))
        if not math.isfinite(y):
            raise EvaluationError(f"psi({mu!r}) = {y}", where=mu)
        return y

    def derivative(self, mu):
        """psi'(mu); central difference when no derivative was supplied.

        The step is ``max(1e-6, 1e-6*mu)`` but never more than half the
        distance to the threshold, so the stencil stays inside the support.
        """
        mu = np.asarray(mu, dtype=float)
        if self.psi_prime is not None:
            return _as_array_fn(self.psi_prime)(mu)
        h = np.maximum(1e-6, 1e-6 * np.abs(mu))
        h = np.minimum(h, 0.5 * (mu - self.e0))
        f = _as_array_fn(self.psi)
        return (f(mu + h) - f(mu - h)) / (2.0 * h)

    def scaled(self, factor: float) -> "SpectralDensity":
        """The density of ``sqrt(factor) * g``."""
        psi, dpsi = self.psi, self.psi_prime
        return SpectralDensity(
            e0=self.e0,
            psi=lambda m: factor * _as_array_fn(psi)(m),
            psi_prime=None if dpsi is None else (lambda m: factor * _as_array_fn(dpsi)(m)),
            label=f"{factor}*{self.label}",
            tabulated=self.tabulated,
            breakpoints=self.breakpoints,
        )


@dataclass(frozen=True)
class GeneralizedVector:
    """Spectral components ``f(mu)`` of the linear-term vector.

    Then psi_f = f**2 and the cross density with g is sqrt(psi_g)*f.
    """

    f: Callable
    label: str = ""

    def __call__(self, mu):
        return _as_array_fn(self.f)(mu)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    witness: float
    where: Optional[float]
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: Tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]


@dataclass(frozen=True)
class GridSpec:
    """Resolution of the validation grid ``mu = e0 + 10**u``."""

    n_points: int = 241
    log_min: float = -8.0
    log_max: float = 6.0
    edge_exponents: Sequence[int] = (4, 5, 6, 7, 8)
    tail_exponents: Sequence[int] = (2, 3, 4, 5, 6)
    limit_tol: float = 1e-4
    rel_tol: float = quadrature.DEFAULT_REL_TOL


def _weight(name: str, e0: float, beta: Optional[float]):
    if name == "one":
        return lambda m: 1.0
    if name == "linear":
        return lambda m: m
    if name == "inverse":
        return lambda m: 1.0 / m
    if name == "inverse_sq":
        return lambda m: 1.0 / (m * m)
    if name == "inv_gap":
        return lambda m: 1.0 / (m - e0)
    if name == "shale_pair":
        return lambda m: m / ((m - e0) * (m + e0))
    if name == "inv_sq_shift":
        if beta is None or not (0.0 <= beta < e0 or e0 == 0.0 and beta == 0.0):
            raise DomainError("inv_sq_shift needs 0 <= beta < e0")
        return lambda m: m / ((m - beta) * (m + beta)) ** 2
    raise InputError(f"unknown weight {name!r}; expected one of {WEIGHTS}")


def moment_with_error(
    d: SpectralDensity,
    weight: str,
    *,
    beta: Optional[float] = None,
    lower: Optional[float] = None,
    rel_tol: float = quadrature.DEFAULT_REL_TOL,
) -> quadrature.QuadResult:
    """``int w(mu) psi(mu) dmu`` over ``(max(e0, lower), inf)`` and its error."""
    key = (weight, beta, lower, rel_tol)
    hit = d._cache.get(key)
    if hit is not None:
        return hit
    w = _weight(weight, d.e0, beta)
    lo = d.e0 if lower is None else max(d.e0, float(lower))
    res = quadrature.integrate(
        lambda m: w(m) * d.value(m) if m > d.e0 else 0.0,
        lo,
        rel_tol=rel_tol,
        breakpoints=d.breakpoints,
        label=f"moment({weight})",
    )
    d._cache[key] = res
    return res


def moment(d: SpectralDensity, weight: str, **kw) -> float:
    """Weighted moment of the density.

    Weights: ``one`` (||g||^2), ``linear`` (||T^{1/2} g||^2), ``inverse``
    (||T^{-1/2} g||^2), ``inverse_sq`` (||T^{-1} g||^2), ``inv_gap``
    (weight 1/(mu-e0)), ``shale_pair`` (mu/(mu^2-e0^2), the weight behind
    the bound-state threshold) and ``inv_sq_shift`` (mu/(mu^2-beta^2)^2).
    """
    return moment_with_error(d, weight, **kw).value


def vector_moment(
    d: SpectralDensity, gv: GeneralizedVector, weight: str, rel_tol=quadrature.DEFAULT_REL_TOL
) -> float:
    """``int w(mu) f(mu)^2 dmu`` for the weights ``one``, ``inverse``, ``linear``."""
    if weight not in ("one", "inverse", "linear"):
        raise InputError(f"unsupported weight {weight!r} for a generalized vector")
    w = _weight(weight, d.e0, None)
    fv = _as_array_fn(gv.f)
    return quadrature.integrate(
        lambda m: w(m) * float(fv(m)) ** 2 if m > d.e0 else 0.0,
        d.e0,
        rel_tol=rel_tol,
        breakpoints=d.breakpoints,
        label=f"||f||^2 ({weight})",
    ).value


def coupling_kappa(
    d: SpectralDensity, gv: GeneralizedVector, rel_tol=quadrature.DEFAULT_REL_TOL
) -> float:
    """``kappa = int f(mu) sqrt(psi(mu)) / mu dmu``, i.e. Re<T^{-1} f, g>."""
    fv = _as_array_fn(gv.f)
    return quadrature.integrate(
        lambda m: float(fv(m)) * math.sqrt(d.value(m)) / m if m > d.e0 else 0.0,
        d.e0,
        rel_tol=rel_tol,
        breakpoints=d.breakpoints,
        label="kappa",
    ).value


# ---------------------------------------------------------------- validation


def _grows_toward_end(values) -> bool:
    a, b, c = (abs(v) for v in values)
    return b > a * (1 + 1e-6) and c > b * (1 + 1e-6)


def _sup_check(name, mu, vals):
    i = int(np.argmax(np.abs(vals)))
    grows = _grows_toward_end(vals[:3][::-1]) or _grows_toward_end(vals[-3:])
    return Check(
        name,
        not grows,
        float(abs(vals[i])),
        float(mu[i]),
        "values grow toward an end of the grid" if grows else "",
    )


def _eval_grid(d: SpectralDensity, mu):
    try:
        vals = np.asarray(d(mu), dtype=float)
    except EvaluationError:
        raise
    except Exception as exc:  # the density itself is broken
        raise InputError(f"density is not evaluable: {exc}") from exc
    bad = ~np.isfinite(vals)
    if np.any(bad):
        where = float(mu[np.argmax(bad)])
        raise EvaluationError(f"psi({where!r}) = {vals[np.argmax(bad)]}", where=where)
    return vals


# a zero is attributed to underflow when its positive neighbour is this small
UNDERFLOW_FLOOR = 1e-250


def _positivity_check(mu, vals):
    """psi > 0 on the grid, except for zeros reached by decay into underflow."""
    neg = vals < 0
    if np.any(neg):
        i = int(np.argmin(vals))
        return Check("positivity", False, float(vals[i]), float(mu[i]), "psi is negative")
    pos = np.flatnonzero(vals > 0)
    if len(pos) == 0:
        return Check("positivity", False, 0.0, float(mu[0]), "psi vanishes on the whole grid")
    first, last = pos[0], pos[-1]
    inner = vals[first : last + 1]
    if np.any(inner == 0):
        i = first + int(np.argmax(inner == 0))
        return Check("positivity", False, 0.0, float(mu[i]), "psi vanishes inside the support")
    if first > 0 and vals[first] > UNDERFLOW_FLOOR:
        return Check("positivity", False, 0.0, float(mu[first - 1]), "psi vanishes near the threshold")
    if last < len(vals) - 1 and vals[last] > UNDERFLOW_FLOOR:
        return Check("positivity", False, 0.0, float(mu[last + 1]), "psi vanishes on a half-line")
    i = first + int(np.argmin(inner))
    note = "zeros on the grid are floating-point underflow" if first > 0 or last < len(vals) - 1 else ""
    return Check("positivity", True, float(vals[i]), float(mu[i]), note)


def _c1_check(d: SpectralDensity, mu, vals):
    """Mean-value test: every secant slope must lie in the range of psi'."""
    sub = np.linspace(0.0, 1.0, 7)
    worst, where = 0.0, None
    for i in range(len(mu) - 1):
        a, b = mu[i], mu[i + 1]
        secant = (vals[i + 1] - vals[i]) / (b - a)
        dv = np.asarray(d.derivative(a + sub * (b - a)), dtype=float)
        if not np.all(np.isfinite(dv)):
            return Check("c1_continuity", False, math.inf, float(a), "psi' not finite")
        lo, hi = float(dv.min()), float(dv.max())
        excess = max(lo - secant, secant - hi, 0.0)
        slack = 0.5 * (hi - lo) + 1e-6 * abs(secant) + 1e-300
        score = excess / slack
        if score > worst:
            worst, where = score, float(0.5 * (a + b))
    return Check(
        "c1_continuity",
        bool(worst <= 1.0),
        float(worst),
        where,
        "secant slope outside the sampled range of psi'" if worst > 1.0 else "",
    )


def _limit_check(d: SpectralDensity, name, points, tol):
    vals = np.abs(np.asarray(d.derivative(points), dtype=float) / points)
    if not np.all(np.isfinite(vals)):
        i = int(np.argmax(~np.isfinite(vals)))
        return Check(name, False, math.inf, float(points[i]), "psi'/x not finite")
    decreasing = all(vals[k + 1] <= vals[k] for k in range(len(vals) - 1))
    ok = bool(vals[-1] < tol and decreasing)
    detail = "" if ok else ("not decreasing" if not decreasing else "limit above tolerance")
    return Check(name, ok, float(vals[-1]), float(points[-1]), detail)


def validate_assumptions(d: SpectralDensity, grid: GridSpec = GridSpec()) -> ValidationReport:
    """Check the standing hypotheses on ``psi`` numerically.

    One check per clause: positivity, boundedness of mu*psi and psi/mu,
    finiteness of the moments ``one``, ``inv_gap`` and ``linear``, the C^1
    property, and vanishing of psi'(x)/x at the threshold and at infinity.
    """
    if not callable(getattr(d, "psi", None)):
        raise InputError("density is not evaluable")
    mu = d.e0 + 10.0 ** np.linspace(grid.log_min, grid.log_max, grid.n_points)
    vals = _eval_grid(d, mu)
    checks = []

    checks.append(_positivity_check(mu, vals))
    checks.append(_sup_check("sup_mu_psi", mu, mu * vals))
    checks.append(_sup_check("sup_inv_mu_psi", mu, vals / mu))

    for weight in ("one", "inv_gap", "linear"):
        name = f"moment_{weight}"
        try:
            v = moment(d, weight, rel_tol=grid.rel_tol)
            ok = math.isfinite(v)
            checks.append(Check(name, ok, v, None, "" if ok else "not finite"))
        except DivergenceError as exc:
            checks.append(Check(name, False, math.inf, None, str(exc)))

    checks.append(_c1_check(d, mu, vals))
    edge = d.e0 + 10.0 ** -np.asarray(grid.edge_exponents, dtype=float)
    tail = d.e0 + 10.0 ** np.asarray(grid.tail_exponents, dtype=float)
    checks.append(_limit_check(d, "derivative_limit_lower", edge, grid.limit_tol))
    checks.append(_limit_check(d, "derivative_limit_upper", tail, grid.limit_tol))
    return ValidationReport(tuple(checks))


# ---------------------------------------------------------------- builtins


def canon() -> SpectralDensity:
    """psi(mu) = (mu-1) exp(-(mu-1)) with threshold 1."""

    def psi(m):
        if isinstance(m, float):
            t = m - 1.0
            return t * math.exp(-t) if t > 0.0 else 0.0
        t = np.asarray(m, dtype=float) - 1.0
        return np.where(t > 0, t * np.exp(-np.maximum(t, 0.0)), 0.0)

    def dpsi(m):
        if isinstance(m, float):
            t = m - 1.0
            return (1.0 - t) * math.exp(-t) if t > 0.0 else 0.0
        t = np.asarray(m, dtype=float) - 1.0
        return np.where(t > 0, (1.0 - t) * np.exp(-np.maximum(t, 0.0)), 0.0)

    return SpectralDensity(e0=1.0, psi=psi, psi_prime=dpsi, label="canon")


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^dim, with the convention |S^0| = 2*pi."""
    if dim == 1:
        return 2.0 * math.pi
    return 2.0 * math.pi ** (dim / 2.0) / float(_gamma(dim / 2.0))


def example_density(dim: int, mass: float, v: Callable, label: str = "") -> SpectralDensity:
    """Density of a rotation-invariant form factor under the dispersion sqrt(k^2+m^2).

    ``psi(s) = |S^{dim-1}| r^(dim-2) v(r)^2`` with ``r = sqrt(s^2 - m^2)``.
    """
    if int(dim) != dim or dim < 1:
        raise InputError(f"dim must be a positive integer, got {dim!r}")
    if not (mass >= 0.0 and math.isfinite(mass)):
        raise InputError(f"mass must be nonnegative, got {mass!r}")
    area = sphere_area(int(dim))
    vv = _as_array_fn(v)
    m2 = float(mass) ** 2

    def psi(s):
        s = np.asarray(s, dtype=float)
        r = np.sqrt(np.maximum(s * s - m2, 0.0))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = area * r ** (dim - 2) * vv(r) ** 2
        return np.where(r > 0, out, 0.0)

    return SpectralDensity(
        e0=float(mass), psi=psi, label=label or f"example(d={dim}, m={mass})"
    )


def smooth_profile(r):
    """Form factor exp(-1/r^2 - r^2), flat to all orders at r = 0."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.exp(-1.0 / (r * r) - r * r)
    return np.where(r > 0, out, 0.0)


def tabulated_density(mu: Sequence[float], psi: Sequence[float], label="tabulated") -> SpectralDensity:
    """Monotone cubic (PCHIP) interpolant of a table; zero beyond the last node."""
    mu = np.asarray(mu, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if mu.ndim != 1 or mu.shape != psi.shape or len(mu) < 2:
        raise InputError("table needs two equal-length columns with at least 2 rows")
    if not np.all(np.diff(mu) > 0):
        raise InputError("mu column must be strictly increasing")
    if not (np.all(np.isfinite(psi)) and np.all(psi >= 0)):
        raise InputError("psi column must be finite and nonnegative")
    interp = PchipInterpolator(mu, psi, extrapolate=False)
    dinterp = interp.derivative()
    top = float(mu[-1])

    nodes = mu.tolist()
    coef = interp.c.T.tolist()  # per interval: cubic coefficients, highest power first

    def scalar(x, deriv):
        # quadrature calls this once per point; bypassing the array machinery is much faster
        if not nodes[0] <= x <= top:
            return 0.0
        i = min(bisect.bisect_right(nodes, x) - 1, len(coef) - 1)
        a, b, c, dd = coef[i]
        t = x - nodes[i]
        if deriv:
            return (3.0 * a * t + 2.0 * b) * t + c
        return ((a * t + b) * t + c) * t + dd

    def f(x):
        if isinstance(x, float):
            return scalar(x, False)
        return np.nan_to_num(interp(np.asarray(x, dtype=float)), nan=0.0)

    def df(x):
        if isinstance(x, float):
            return scalar(x, True)
        return np.nan_to_num(dinterp(np.asarray(x, dtype=float)), nan=0.0)

    return SpectralDensity(
        e0=float(mu[0]), psi=f, psi_prime=df, label=label, tabulated=True, breakpoints=(top,)
    )
