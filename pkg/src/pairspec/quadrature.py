"""Adaptive integration on half-lines and fixed Gauss rules in a compactified variable.

The adaptive work is delegated to QUADPACK (``scipy.integrate.quad``).  A
half-line ``[lo, inf)`` is mapped onto ``[0, 1)`` by ``mu = lo + t/(1-t)``.
When QUADPACK reports trouble, the integral is re-examined by splitting off
the pieces near each end at geometrically shrinking scales; pieces that do
not shrink mark a divergent integral.
"""

import math
import warnings
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate as _sp_integrate

from .errors import DivergenceError, EvaluationError

DEFAULT_REL_TOL = 1e-10
QUAD_LIMIT = 500

# successive decade pieces must shrink at least this much for convergence
_SHRINK_RATIO = 0.9


class QuadResult(NamedTuple):
    value: float
    abs_err: float


def _checked(f: Callable[[float], float]) -> Callable[[float], float]:
    def g(x):
        y = float(f(x))
        if not math.isfinite(y):
            raise EvaluationError(f"integrand returned {y} at mu={x!r}", where=x)
        return y

    return g


def to_unit(mu, lo):
    """Inverse of the compactifying map: ``t = (mu-lo)/(1+mu-lo)``."""
    u = mu - lo
    return u / (1.0 + u)


def from_unit(t, lo):
    """Compactifying map ``mu = lo + t/(1-t)`` and its Jacobian."""
    one_minus = 1.0 - t
    return lo + t / one_minus, 1.0 / (one_minus * one_minus)


def _quad(f, a, b, rel_tol, abs_tol, points):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = _sp_integrate.quad(
            f,
            a,
            b,
            epsabs=abs_tol,
            epsrel=rel_tol,
            limit=QUAD_LIMIT,
            points=points or None,
            full_output=1,
        )
    value, err = out[0], out[1]
    ier = 0 if len(out) == 3 else 1
    return value, err, ier


def _end_pieces(f, lo, hi, rel_tol):
    """Integrals over decade-shrinking slices next to each end of ``[lo, hi]``."""
    infinite = math.isinf(hi)
    # probe the edge on its own scale, not on the scale of a long interval
    width = min(hi - lo, max(1.0, abs(lo)))
    h = [width * 10.0 ** (-2 * k) for k in range(1, 6)]
    out = [
        ("lower edge", [_quad(f, lo + h[k + 1], lo + h[k], rel_tol, 0.0, None)[0] for k in range(4)])
    ]
    if infinite:
        r = [lo + 10.0 ** (2 * k) for k in range(1, 6)]
        out.append(("tail", [_quad(f, r[k], r[k + 1], rel_tol, 0.0, None)[0] for k in range(4)]))
    return out


def _divergent_end(f, lo, hi, rel_tol):
    for where, pieces in _end_pieces(f, lo, hi, rel_tol):
        p = [abs(x) for x in pieces]
        if p[-1] > 0.0 and p[-1] > _SHRINK_RATIO * p[-2] and p[-2] > _SHRINK_RATIO * p[-3]:
            return where, pieces
    return None


def integrate(
    f: Callable[[float], float],
    lo: float,
    hi: float = math.inf,
    *,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = 0.0,
    breakpoints: Sequence[float] = (),
    label: str = "integral",
) -> QuadResult:
    """Integrate ``f`` over ``[lo, hi]`` with ``hi`` possibly infinite.

    Raises DivergenceError if the end pieces fail to shrink under
    refinement, EvaluationError if ``f`` produces a non-finite value.
    """
    fc = _checked(f)
    if hi <= lo:
        return QuadResult(0.0, 0.0)
    if math.isinf(hi):

        def g(t):
            if t >= 1.0:
                return 0.0
            mu, jac = from_unit(t, lo)
            return fc(mu) * jac

        pts = sorted(to_unit(p, lo) for p in breakpoints if lo < p)
        a, b = 0.0, 1.0
    else:
        g = fc
        pts = sorted(p for p in breakpoints if lo < p < hi)
        a, b = lo, hi
    value, err, ier = _quad(g, a, b, rel_tol, abs_tol, pts)
    if ier == 0 and err <= max(abs_tol, rel_tol * abs(value)) * 10:
        return QuadResult(value, err)
    bad = _divergent_end(fc, lo, hi, rel_tol)
    if bad is not None:
        where, pieces = bad
        raise DivergenceError(
            f"{label} does not converge at the {where}: "
            f"successive pieces {['%.3g' % x for x in pieces]} do not shrink"
        )
    return QuadResult(value, err)


def gauss_unit(n: int):
    """Gauss-Legendre nodes and weights on ``(0, 1)``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_halfline(n: int, lo: float, hi: float = math.inf):
    """n-point Gauss rule on ``[lo, hi]`` in the compactified variable."""
    t, w = gauss_unit(n)
    t_hi = 1.0 if math.isinf(hi) else to_unit(hi, lo)
    t = t * t_hi
    w = w * t_hi
    mu, jac = from_unit(t, lo)
    return mu, w * jac
