"""The dispersion function, its boundary values on the cut, and the coupling thresholds.

    D(z) = 1 + lam * int mu psi(mu) / (mu^2 - e0^2 - z) dmu,   z not in (0, inf).

With ``phi(x) = psi(sqrt(x))`` for ``x >= e0^2`` the boundary values on the
cut are ``D(s +- i0) = 1 + (lam pi/2) (H phi)(e0^2 + s) +- i (lam pi/2) psi``
where ``H`` is the Hilbert transform ``(1/pi) PV int phi(u)/(u - x) du``.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from . import quadrature
from .density import SpectralDensity, moment_with_error
from .errors import DivergenceError, DomainError, NumericError, RegimeError

DEFAULT_REL_TOL = quadrature.DEFAULT_REL_TOL
CROSS_CHECK_TOL = 1e-6
# couplings this close (relative) to a threshold count as the threshold itself
THRESHOLD_REL = 1e-12

HILBERT_METHODS = ("pv_subtracted", "poisson_extrapolated")


class NearCriticalWarning(UserWarning):
    """The infimum of |D+-| came out tiny although the coupling is not critical."""


@dataclass(frozen=True)
class DispersionValue:
    value: complex
    abs_err: float


@dataclass(frozen=True)
class BoundaryPair:
    s: float
    d_plus: complex
    d_minus: complex
    hilbert: float
    imag_part: float
    abs_err: float = 0.0


@dataclass(frozen=True)
class CriticalCouplings:
    lambda_c: float
    lambda_c0: float
    lambda_T: float
    lambda_c_err: float = 0.0
    lambda_c0_err: float = 0.0
    lambda_T_err: float = 0.0


# ------------------------------------------------------------------ D and D'


def _gap(d: SpectralDensity, mu: float) -> float:
    """mu^2 - e0^2 without cancellation near the threshold."""
    return (mu - d.e0) * (mu + d.e0)


def eval_D(d: SpectralDensity, lam: float, z, rel_tol: float = DEFAULT_REL_TOL) -> DispersionValue:
    """D(z) off the cut.  ``z`` on the positive real axis is rejected."""
    z = complex(z)
    x, y = z.real, z.imag
    if y == 0.0 and x > 0.0:
        raise DomainError(f"D is not defined on the cut, z={z}")
    if lam == 0.0:
        return DispersionValue(1.0 + 0.0j, 0.0)
    e0 = d.e0
    pts = list(d.breakpoints)
    if x > 0.0:
        # resolve the Lorentzian peak of width |y| around mu^2 = e0^2 + x
        pts.append(math.sqrt(e0 * e0 + x))
        for k in range(12):
            w = abs(y) * 10.0 ** k
            if w > x:
                break
            pts += [math.sqrt(e0 * e0 + x - w), math.sqrt(e0 * e0 + x + w)]

    def re_part(m):
        if m <= e0:
            return 0.0
        a = _gap(d, m) - x
        return m * d.value(m) * a / (a * a + y * y)

    try:
        re = quadrature.integrate(re_part, e0, rel_tol=rel_tol, breakpoints=pts, label="D(z)")
    except DivergenceError as exc:
        raise DivergenceError(
            f"D({z}) diverges: psi does not vanish at the threshold fast enough ({exc})"
        ) from exc
    im_val, im_err = 0.0, 0.0
    if y != 0.0:

        def im_part(m):
            if m <= e0:
                return 0.0
            a = _gap(d, m) - x
            return m * d.value(m) * y / (a * a + y * y)

        im = quadrature.integrate(im_part, e0, rel_tol=rel_tol, breakpoints=pts, label="D(z)")
        im_val, im_err = im.value, im.abs_err
    value = complex(1.0 + lam * re.value, lam * im_val)
    return DispersionValue(value, abs(lam) * (re.abs_err + im_err))


def eval_D_prime(d: SpectralDensity, lam: float, x: float, rel_tol: float = DEFAULT_REL_TOL) -> DispersionValue:
    """D'(x) on the negative axis; it has the sign of ``lam``."""
    if not x < 0.0:
        raise DomainError(f"D' is evaluated on the negative axis only, x={x}")
    if lam == 0.0:
        return DispersionValue(0.0, 0.0)
    e0 = d.e0

    def f(m):
        if m <= e0:
            return 0.0
        a = _gap(d, m) - x
        return m * d.value(m) / (a * a)

    r = quadrature.integrate(f, e0, rel_tol=rel_tol, breakpoints=d.breakpoints, label="D'(x)")
    return DispersionValue(complex(lam * r.value, 0.0), abs(lam) * r.abs_err)


# ------------------------------------------------------------------ Hilbert transform


def _phi(d: SpectralDensity, u: float) -> float:
    e2 = d.e0 * d.e0
    return d.value(math.sqrt(u)) if u > e2 else 0.0


def _phi_prime(d: SpectralDensity, u: float) -> float:
    r = math.sqrt(u)
    return float(d.derivative(r)) / (2.0 * r)


def _edge_value(d: SpectralDensity) -> float:
    """Right limit psi(e0+); zero when psi keeps shrinking toward the threshold."""
    scale = max(1.0, d.e0)
    near_val = d.value(d.e0 + 1e-12 * scale)
    far_val = d.value(d.e0 + 1e-8 * scale)
    if near_val == 0.0 or near_val <= 1e-3 * far_val:
        return 0.0
    return near_val


def _hilbert_pv(d: SpectralDensity, x: float, rel_tol: float) -> quadrature.QuadResult:
    e2 = d.e0 * d.e0
    bps = [b * b for b in d.breakpoints]
    if x < e2:
        r = quadrature.integrate(
            lambda u: _phi(d, u) / (u - x), e2, rel_tol=rel_tol, breakpoints=bps, label="H phi"
        )
        return quadrature.QuadResult(r.value / math.pi, r.abs_err / math.pi)
    w = max(1.0, 0.1 * x)
    lo, hi = max(e2, x - w), x + w
    fx = _phi(d, x) if x > e2 else _edge_value(d)
    if lo == x and fx != 0.0:
        raise DivergenceError(
            f"H phi diverges at x={x}: phi does not vanish at the end of its support"
        )
    dfx = _phi_prime(d, x) if x > e2 else 0.0

    def q(u):
        if u == x:
            return dfx
        return (_phi(d, u) - fx) / (u - x)

    total, err = 0.0, 0.0
    inner = [b for b in bps if lo < b < hi]
    if lo < x:
        r = quadrature.integrate(q, lo, x, rel_tol=rel_tol, breakpoints=inner, label="H phi")
        total, err = total + r.value, err + r.abs_err
    r = quadrature.integrate(q, x, hi, rel_tol=rel_tol, breakpoints=inner, label="H phi")
    total, err = total + r.value, err + r.abs_err
    if fx != 0.0:
        total += fx * math.log((hi - x) / (x - lo))
    if lo > e2:
        r = quadrature.integrate(
            lambda u: _phi(d, u) / (u - x), e2, lo, rel_tol=rel_tol, breakpoints=bps, label="H phi"
        )
        total, err = total + r.value, err + r.abs_err
    r = quadrature.integrate(
        lambda u: _phi(d, u) / (u - x), hi, rel_tol=rel_tol, breakpoints=bps, label="H phi"
    )
    total, err = total + r.value, err + r.abs_err
    return quadrature.QuadResult(total / math.pi, err / math.pi)


def _conjugate_poisson(d: SpectralDensity, x: float, eps: float, rel_tol: float) -> float:
    """(1/pi) int phi(u) (u-x) / ((u-x)^2 + eps^2) du."""
    e2 = d.e0 * d.e0

    def f(u):
        t = u - x
        return _phi(d, u) * t / (t * t + eps * eps)

    w = max(1.0, 0.1 * abs(x))
    cuts = {x + k * eps for k in (-500, -50, -5, 0, 5, 50, 500)}
    cuts |= {b * b for b in d.breakpoints}
    cuts = sorted(c for c in cuts if e2 < c < x + w)
    edges = [e2] + cuts + [max(x + w, e2 + w)]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += quadrature.integrate(f, a, b, rel_tol=rel_tol, abs_tol=1e-15, label="H_eps phi").value
    total += quadrature.integrate(f, edges[-1], rel_tol=rel_tol, label="H_eps phi").value
    return total / math.pi


def _extrapolate(eps, vals, basis):
    a = np.column_stack([b(eps) for b in basis])
    return float(np.linalg.solve(a, vals)[0])


def _hilbert_poisson(d: SpectralDensity, x: float, rel_tol: float) -> quadrature.QuadResult:
    """Conjugate-Poisson smoothing at several widths, extrapolated to width 0.

    Away from the threshold the smoothed value is a power series in the
    width whose radius is the distance to the threshold, so the width ladder
    scales with that distance.  Exactly at the threshold a kink of phi adds
    an eps^2 log(eps) term, which the fit there includes.
    """
    e2 = d.e0 * d.e0
    dist = abs(x - e2)
    one = lambda e: np.ones_like(e)
    lin = lambda e: e
    sq = lambda e: e * e
    cube = lambda e: e ** 3
    if dist == 0.0:
        if _edge_value(d) != 0.0:
            raise DivergenceError(f"H phi diverges at x={x}: phi jumps at the end of its support")
        eps = 1e-2 * 0.5 ** np.arange(5)
        basis = [one, lin, lambda e: e * e * np.log(e), sq, cube]
    else:
        h = min(1e-2, dist / 10.0)
        eps = h * 0.5 ** np.arange(4)
        basis = [one, lin, sq, cube]
    vals = np.array([_conjugate_poisson(d, x, e, rel_tol) for e in eps])
    best = _extrapolate(eps, vals, basis)
    lower = _extrapolate(eps[1:], vals[1:], basis[:-1])
    return quadrature.QuadResult(best, abs(best - lower))


def hilbert_phi_with_error(
    d: SpectralDensity, x: float, method: str = "pv_subtracted", rel_tol: float = DEFAULT_REL_TOL
) -> quadrature.QuadResult:
    if method == "pv_subtracted":
        return _hilbert_pv(d, float(x), rel_tol)
    if method == "poisson_extrapolated":
        r = _hilbert_poisson(d, float(x), rel_tol)
        if not (math.isfinite(r.value) and r.abs_err <= CROSS_CHECK_TOL):
            pv = _hilbert_pv(d, float(x), rel_tol).value
            raise NumericError(
                f"width extrapolation of H phi did not settle at x={x} (spread {r.abs_err:.3g})",
                values={"poisson_extrapolated": r.value, "pv_subtracted": pv},
            )
        return r
    raise ValueError(f"unknown method {method!r}; expected one of {HILBERT_METHODS}")


def hilbert_phi(d: SpectralDensity, x: float, method: str = "pv_subtracted", rel_tol: float = DEFAULT_REL_TOL) -> float:
    """(H phi)(x) = (1/pi) PV int phi(u)/(u - x) du with phi(u) = psi(sqrt(u))."""
    return hilbert_phi_with_error(d, x, method, rel_tol).value


# ------------------------------------------------------------------ boundary values


def _pair(d: SpectralDensity, lam: float, s: float, h: float, err: float) -> BoundaryPair:
    im = lam * math.pi / 2.0 * d.value(math.sqrt(d.e0 * d.e0 + s))
    re = 1.0 + lam * math.pi / 2.0 * h
    return BoundaryPair(
        s=s,
        d_plus=complex(re, im),
        d_minus=complex(re, -im),
        hilbert=h,
        imag_part=im,
        abs_err=abs(lam) * math.pi / 2.0 * err,
    )


def boundary_values(d: SpectralDensity, lam: float, s: float, rel_tol: float = DEFAULT_REL_TOL) -> BoundaryPair:
    """D+(s) and D-(s), built from one shared real part and one imaginary part."""
    if not s >= 0.0:
        raise DomainError(f"boundary values live on s >= 0, got s={s}")
    h = hilbert_phi_with_error(d, d.e0 * d.e0 + s, "pv_subtracted", rel_tol)
    return _pair(d, lam, float(s), h.value, h.abs_err)


def hilbert_on_cut(d: SpectralDensity, s_values, rel_tol: float = DEFAULT_REL_TOL):
    """(H phi)(e0^2 + s) for many s, memoized on the density (it does not depend on lam)."""
    s_values = np.asarray(s_values, dtype=float)
    key = ("hilbert_on_cut", s_values.tobytes(), rel_tol)
    hit = d._cache.get(key)
    if hit is None:
        e2 = d.e0 * d.e0
        res = [hilbert_phi_with_error(d, e2 + s, "pv_subtracted", rel_tol) for s in s_values]
        hit = (np.array([r.value for r in res]), np.array([r.abs_err for r in res]))
        d._cache[key] = hit
    return hit


# ------------------------------------------------------------------ thresholds


def critical_couplings(d: SpectralDensity, rel_tol: float = DEFAULT_REL_TOL) -> CriticalCouplings:
    """lambda_c0 = -1/||T^{-1/2} g||^2, lambda_c and the radius lambda_T.

    The two negative thresholds always come from separate integrals, even
    when e0 = 0 makes their integrands identical.
    """
    inv = moment_with_error(d, "inverse", rel_tol=rel_tol)
    try:
        pair = moment_with_error(d, "shale_pair", rel_tol=rel_tol)
    except DivergenceError as exc:
        raise DivergenceError(
            "the bound-state threshold integral int mu psi/(mu^2-e0^2) diverges at the "
            f"threshold: psi(mu) does not vanish as mu -> e0 ({exc})"
        ) from exc
    lin = moment_with_error(d, "linear", rel_tol=rel_tol)
    lc0 = -1.0 / inv.value
    lc = -1.0 / pair.value
    a, b = math.sqrt(inv.value), math.sqrt(lin.value)
    lt = 1.0 / (a * (a + b))
    # first-order propagation of the quadrature errors
    da = inv.abs_err / (2 * a)
    db = lin.abs_err / (2 * b)
    lt_err = lt * lt * ((2 * a + b) * da + a * db)
    return CriticalCouplings(
        lambda_c=lc,
        lambda_c0=lc0,
        lambda_T=lt,
        lambda_c_err=pair.abs_err / pair.value ** 2,
        lambda_c0_err=inv.abs_err / inv.value ** 2,
        lambda_T_err=lt_err,
    )


def near(lam: float, threshold: float, rel: float) -> bool:
    return abs(lam - threshold) <= rel * abs(threshold)


def find_x0(d: SpectralDensity, lam: float, rel_tol: float = 1e-12, cc: Optional[CriticalCouplings] = None) -> float:
    """The unique negative zero of D, which exists exactly for lam < lambda_c."""
    cc = cc or critical_couplings(d)
    if near(lam, cc.lambda_c, THRESHOLD_REL) or not lam < cc.lambda_c:
        raise RegimeError(f"D has no negative zero unless lam < lambda_c = {cc.lambda_c}; lam={lam}")

    def D(x):
        return eval_D(d, lam, x, rel_tol).value.real

    right, left = 0.0, -1.0
    f_left = D(left)
    steps = 0
    while f_left <= 0.0:
        right, left = left, 2.0 * left
        f_left = D(left)
        steps += 1
        if steps > 200:
            raise NumericError("could not bracket the negative zero of D", values={"left": left})
    x0 = optimize.brentq(D, left, right, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    f0 = D(x0)
    if f0 != 0.0:
        slope = eval_D_prime(d, lam, x0, rel_tol).value.real
        x1 = x0 - f0 / slope
        if left <= x1 < 0.0 and abs(D(x1)) < abs(f0):
            x0 = x1
    return float(x0)


def delta_inf(
    d: SpectralDensity,
    lam: float,
    n_grid: int = 512,
    rel_tol: float = DEFAULT_REL_TOL,
    cc: Optional[CriticalCouplings] = None,
) -> float:
    """inf over s >= 0 of |D+(s)|, from a compactified grid refined by golden-section search."""
    if lam == 0.0:
        return 1.0
    cc = cc or critical_couplings(d)
    if near(lam, cc.lambda_c, THRESHOLD_REL):
        raise RegimeError("delta vanishes at lam = lambda_c")
    u = np.arange(n_grid) / n_grid
    s = u / (1.0 - u)
    h, _ = hilbert_on_cut(d, s, rel_tol)
    psi_cut = np.array([d.value(math.sqrt(d.e0 * d.e0 + v)) for v in s])
    mod = np.abs(1.0 + lam * math.pi / 2.0 * (h + 1j * psi_cut))

    def at(uu):
        uu = min(max(uu, 0.0), 1.0 - 1e-15)
        return abs(boundary_values(d, lam, uu / (1.0 - uu), rel_tol).d_plus)

    best = float(mod.min())
    for k in np.argsort(mod)[:3]:
        if k == 0 or k == n_grid - 1:
            continue
        a, b, c = u[k - 1], u[k], u[k + 1]
        if not (mod[k] <= mod[k - 1] and mod[k] <= mod[k + 1]):
            continue
        r = optimize.minimize_scalar(at, bracket=(a, b, c), method="golden", tol=1e-8)
        if a <= r.x <= c:
            best = min(best, float(r.fun))
    if best < 1e-10:
        warnings.warn(
            f"inf |D+| = {best:.3g} at lam={lam}; the grid may be straddling a near-critical coupling",
            NearCriticalWarning,
        )
    return best
