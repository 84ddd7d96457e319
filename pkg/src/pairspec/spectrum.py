"""Ground-state energy, bound state, energy shift and spectral classification."""

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import quadrature
from .density import (
    GeneralizedVector,
    SpectralDensity,
    coupling_kappa,
    moment,
    moment_with_error,
    vector_moment,
)
from .dispersion import (
    THRESHOLD_REL,
    CriticalCouplings,
    critical_couplings,
    eval_D_prime,
    find_x0,
    hilbert_on_cut,
    near,
)
from .errors import InputError, RegimeError

DEFAULT_NODES = 400
# the classifier snaps couplings this close (relative) to a threshold onto it
CLASSIFY_REL = 1e-9

SUPERCRITICAL = "supercritical"
BOUND = "bound"
UNBOUNDED = "unbounded"
CRITICAL_C = "critical_c"
CRITICAL_C0 = "critical_c0"


class WitnessParameterWarning(UserWarning):
    """c_lambda(eps, delta) is not negative, so the series cannot run to -infinity."""


@dataclass(frozen=True)
class BoundState:
    x0: float
    beta: float
    e_b: float
    ub_norm: float
    e_b_unsimplified: float = math.nan


@dataclass(frozen=True)
class SpectrumDescription:
    regime: str
    lam: float
    eta: float
    e_g: Optional[float]
    e_g_err: Optional[float]
    e_b: float
    beta: Optional[float]
    point_spectrum: Tuple[float, ...]
    ac_start: Optional[float]
    sc_empty: bool
    whole_line: bool
    bounded_below: Optional[bool]
    bounded_above: bool
    shift: float
    kappa: Optional[float] = None
    notes: Tuple[str, ...] = ()


@dataclass(frozen=True)
class WitnessSeries:
    n: np.ndarray
    rayleigh: np.ndarray
    c_lambda: float
    delta: float
    eps: float
    lam: float

    def at(self, n: int) -> float:
        return float(self.rayleigh[n])

    def sample(self, count: int = 200):
        """(N, quotient) at roughly log-spaced N, always including the last one."""
        top = int(self.n[-1])
        ns = np.unique(np.round(np.geomspace(1, max(top, 1), count)).astype(int))
        return [(int(k), float(self.rayleigh[k])) for k in ns]


# ------------------------------------------------------------------ traces


def _outer_rule(d: SpectralDensity, n: int, rel_tol: float):
    mu, w = quadrature.gauss_halfline(n, d.e0)
    key = ("inner_kernel", n, rel_tol)
    inner = d._cache.get(key)
    if inner is None:
        inner = np.array(
            [
                quadrature.integrate(
                    lambda m, x=x: d.value(m) / (x + m) ** 2,
                    d.e0,
                    rel_tol=rel_tol,
                    breakpoints=d.breakpoints,
                    label="inner trace integral",
                ).value
                for x in mu
            ]
        )
        d._cache[key] = inner
    s = (mu - d.e0) * (mu + d.e0)
    h, _ = hilbert_on_cut(d, s, rel_tol)
    psi = d(mu)
    return mu, w, psi, inner, h


def _trace_on(d: SpectralDensity, lam: float, weighted: bool, n: int, rel_tol: float) -> float:
    mu, w, psi, inner, h = _outer_rule(d, n, rel_tol)
    half = lam * math.pi / 2.0
    dm2 = (1.0 + half * h) ** 2 + (half * psi) ** 2
    weight = mu if weighted else 1.0
    return float(lam * lam / 4.0 * np.sum(w * weight * psi * inner / dm2))


def hs_trace_with_error(
    d: SpectralDensity,
    lam: float,
    weighted: bool,
    n_nodes: int = DEFAULT_NODES,
    cc: Optional[CriticalCouplings] = None,
    rel_tol: float = quadrature.DEFAULT_REL_TOL,
) -> quadrature.QuadResult:
    """(lam^2/4) int int w(mu) psi(mu) psi(mu') / ((mu+mu')^2 |D-(mu^2-e0^2)|^2).

    ``w(mu) = mu`` when ``weighted`` (the trace entering the ground-state
    energy), ``1`` otherwise (the Hilbert-Schmidt norm of V).  The outer
    integral is a Gauss rule in the compactified variable; the error is the
    change from half as many nodes.
    """
    if lam == 0.0:
        return quadrature.QuadResult(0.0, 0.0)
    cc = cc or critical_couplings(d)
    if near(lam, cc.lambda_c, THRESHOLD_REL):
        raise RegimeError("the trace formula needs lam != lambda_c")
    fine = _trace_on(d, lam, weighted, n_nodes, rel_tol)
    coarse = _trace_on(d, lam, weighted, n_nodes // 2, rel_tol)
    return quadrature.QuadResult(fine, abs(fine - coarse))


def hs_trace_weighted(d: SpectralDensity, lam: float, weighted: bool = True, **kw) -> float:
    return hs_trace_with_error(d, lam, weighted, **kw).value


def _energy_formula(d, lam, cc, n_nodes, rel_tol) -> quadrature.QuadResult:
    tr = hs_trace_with_error(d, lam, True, n_nodes=n_nodes, cc=cc, rel_tol=rel_tol)
    one = moment_with_error(d, "one", rel_tol=rel_tol)
    return quadrature.QuadResult(
        lam / 4.0 * one.value - tr.value, abs(lam) / 4.0 * one.abs_err + tr.abs_err
    )


def ground_energy_with_error(
    d: SpectralDensity,
    lam: float,
    n_nodes: int = DEFAULT_NODES,
    cc: Optional[CriticalCouplings] = None,
    rel_tol: float = quadrature.DEFAULT_REL_TOL,
) -> quadrature.QuadResult:
    cc = cc or critical_couplings(d)
    if near(lam, cc.lambda_c, THRESHOLD_REL) or not lam > cc.lambda_c:
        raise RegimeError(f"ground_energy needs lam > lambda_c = {cc.lambda_c}; lam={lam}")
    return _energy_formula(d, lam, cc, n_nodes, rel_tol)


def ground_energy(d: SpectralDensity, lam: float, **kw) -> float:
    """E_g = (lam/4)||g||^2 - Tr(T^{1/2} V* V T^{1/2}) for lam > lambda_c."""
    if lam == 0.0:
        return 0.0
    return ground_energy_with_error(d, lam, **kw).value


# ------------------------------------------------------------------ bound state


def bound_state(
    d: SpectralDensity,
    lam: float,
    cc: Optional[CriticalCouplings] = None,
    rel_tol: float = quadrature.DEFAULT_REL_TOL,
) -> BoundState:
    """x0, beta = sqrt(e0^2 + x0), E_b and the norm of the bound-state vector."""
    if d.e0 <= 0.0:
        raise RegimeError("a bound state below the continuum needs e0 > 0")
    cc = cc or critical_couplings(d)
    inside = cc.lambda_c0 < lam < cc.lambda_c
    if not inside or near(lam, cc.lambda_c, THRESHOLD_REL) or near(lam, cc.lambda_c0, THRESHOLD_REL):
        raise RegimeError(
            f"bound_state needs lambda_c0 < lam < lambda_c = ({cc.lambda_c0}, {cc.lambda_c}); lam={lam}"
        )
    x0 = find_x0(d, lam, rel_tol=min(rel_tol, 1e-12), cc=cc)
    beta = math.sqrt(d.e0 * d.e0 + x0)
    scale = lam / eval_D_prime(d, lam, x0, rel_tol).value.real
    norm_sq = scale * moment(d, "inv_sq_shift", beta=beta, rel_tol=rel_tol)

    # ((beta/mu)^{1/2} - (mu/beta)^{1/2})^2/4 * mu/(mu^2-beta^2)^2 == 1/(4 beta (mu+beta)^2)
    e_b = scale * quadrature.integrate(
        lambda m: d.value(m) / (4.0 * (m + beta) ** 2), d.e0, rel_tol=rel_tol, breakpoints=d.breakpoints
    ).value

    def unsimplified(m):
        if m <= d.e0:
            return 0.0
        k = (math.sqrt(beta / m) - math.sqrt(m / beta)) ** 2 / 4.0
        return k * m * d.value(m) / ((m - beta) * (m + beta)) ** 2

    e_b_check = beta * scale * quadrature.integrate(
        unsimplified, d.e0, rel_tol=rel_tol, breakpoints=d.breakpoints
    ).value
    return BoundState(x0=x0, beta=beta, e_b=e_b, ub_norm=math.sqrt(norm_sq), e_b_unsimplified=e_b_check)


# ------------------------------------------------------------------ linear term


def _kappa_is_zero(d, gv, kappa) -> bool:
    bound = math.sqrt(moment(d, "inverse_sq") * vector_moment(d, gv, "one"))
    return abs(kappa) <= 1e-10 * bound


def shift_Efg(
    d: SpectralDensity,
    gv: Optional[GeneralizedVector],
    eta: float,
    lam: float,
    cc: Optional[CriticalCouplings] = None,
) -> float:
    """Constant shift produced by the linear term eta * Phi(f)."""
    if eta == 0.0:
        return 0.0
    if gv is None:
        raise InputError("a nonzero eta needs the vector f")
    cc = cc or critical_couplings(d)
    if near(lam, cc.lambda_c0, THRESHOLD_REL):
        raise RegimeError("the shift formula is singular at lam = lambda_c0")
    f_inv = vector_moment(d, gv, "inverse")
    kappa = coupling_kappa(d, gv)
    g_inv = moment(d, "inverse")
    return -eta * eta / 2.0 * f_inv + kappa * kappa * eta * eta * lam / (2.0 * (1.0 + lam * g_inv))


# ------------------------------------------------------------------ classification


def classify(
    d: SpectralDensity,
    lam: float,
    eta: float = 0.0,
    gv: Optional[GeneralizedVector] = None,
    n_report: int = 8,
    n_nodes: int = DEFAULT_NODES,
    cc: Optional[CriticalCouplings] = None,
    rel_tol: float = quadrature.DEFAULT_REL_TOL,
) -> SpectrumDescription:
    """Regime of ``lam`` and the spectral sets the theory identifies there."""
    if eta != 0.0 and gv is None:
        raise InputError("a nonzero eta needs the vector f")
    cc = cc or critical_couplings(d, rel_tol)
    base = dict(lam=lam, eta=eta, e_b=0.0, beta=None, sc_empty=False, whole_line=False)

    if near(lam, cc.lambda_c0, CLASSIFY_REL):
        if eta == 0.0:
            return SpectrumDescription(
                regime=CRITICAL_C0, e_g=None, e_g_err=None, point_spectrum=(), ac_start=None,
                bounded_below=True, bounded_above=False, shift=0.0,
                notes=("bounded below; the spectrum is not identified at this coupling",), **base,
            )
        kappa = coupling_kappa(d, gv)
        if not _kappa_is_zero(d, gv, kappa):
            base.update(whole_line=True)
            return SpectrumDescription(
                regime=CRITICAL_C0, e_g=None, e_g_err=None, point_spectrum=(), ac_start=None,
                bounded_below=False, bounded_above=False, shift=0.0, kappa=kappa,
                notes=("spectrum is the whole real line; no eigenvalues",), **base,
            )
        shift = -eta * eta / 2.0 * vector_moment(d, gv, "inverse")
        return SpectrumDescription(
            regime=CRITICAL_C0, e_g=None, e_g_err=None, point_spectrum=(), ac_start=None,
            bounded_below=True, bounded_above=False, shift=shift, kappa=0.0,
            notes=(
                "kappa = 0: unitarily equivalent to the eta = 0 operator shifted by "
                "-eta^2 ||T^{-1/2} f||^2 / 2",
                "bounded below; the spectrum is not identified at this coupling",
            ),
            **base,
        )

    if near(lam, cc.lambda_c, CLASSIFY_REL):
        return SpectrumDescription(
            regime=CRITICAL_C, e_g=None, e_g_err=None, point_spectrum=(), ac_start=None,
            bounded_below=None, bounded_above=False, shift=0.0,
            notes=("boundary coupling lambda_c: excluded from the classification",), **base,
        )

    if lam < cc.lambda_c0:
        return SpectrumDescription(
            regime=UNBOUNDED, e_g=None, e_g_err=None, point_spectrum=(), ac_start=None,
            bounded_below=False, bounded_above=False, shift=0.0,
            notes=("unbounded above and below",), **base,
        )

    shift = shift_Efg(d, gv, eta, lam, cc=cc) if eta != 0.0 else 0.0
    kappa = coupling_kappa(d, gv) if gv is not None and eta != 0.0 else None
    if lam == 0.0:
        eg = quadrature.QuadResult(0.0, 0.0)
    else:
        eg = _energy_formula(d, lam, cc, n_nodes, rel_tol)
    base.update(sc_empty=True)

    if lam > cc.lambda_c:
        return SpectrumDescription(
            regime=SUPERCRITICAL, e_g=eg.value, e_g_err=eg.abs_err,
            point_spectrum=(eg.value + shift,), ac_start=d.e0 + eg.value + shift,
            bounded_below=True, bounded_above=False, shift=shift, kappa=kappa,
            notes=("ground state is the only eigenvalue",), **base,
        )

    bs = bound_state(d, lam, cc=cc, rel_tol=rel_tol)
    bottom = eg.value - bs.e_b + shift
    ladder = tuple(n * bs.beta + bottom for n in range(n_report + 1))
    notes = ["ladder n*beta + E_g - E_b continues for all n"]
    first_embedded = math.ceil(d.e0 / bs.beta)
    notes.append(f"eigenvalues with n >= {first_embedded} are embedded in the continuum")
    base.update(e_b=bs.e_b, beta=bs.beta)
    return SpectrumDescription(
        regime=BOUND, e_g=eg.value, e_g_err=eg.abs_err, point_spectrum=ladder,
        ac_start=d.e0 + bottom, bounded_below=True, bounded_above=False, shift=shift,
        kappa=kappa, notes=tuple(notes), **base,
    )


# ------------------------------------------------------------------ unboundedness witness


def _witness_moments(d: SpectralDensity, delta: float):
    lower = max(d.e0, delta)
    m = moment(d, "inverse", lower=lower)
    n = moment(d, "inverse_sq", lower=lower)
    return m, n


def c_lambda(d: SpectralDensity, lam: float, delta: float, eps: float) -> float:
    """||T^{1/2} f_delta||^2 (1 + (lam/2)(2 - eps) ||T^{-1/2} E((delta, inf)) g||^2)."""
    m, n = _witness_moments(d, delta)
    return m / n * (1.0 + lam / 2.0 * (2.0 - eps) * m)


def unboundedness_witness(
    d: SpectralDensity, lam: float, delta: float, eps: float, n_max: int
) -> WitnessSeries:
    """Rayleigh quotients of phi_N = sum_{n<=N} a_n A(f_delta)*^n Omega, N = 0..n_max.

    a_0 = 1 and a_n = n^{-3/4} (n!)^{-1/2}, so ||psi_n||^2 = n^{-3/2} for the
    normalized f_delta = T^{-1} E((delta, inf)) g / ||...||.
    """
    if not delta > 0.0:
        raise InputError("delta must be positive")
    if not 0.0 < eps < 1.0:
        raise InputError("eps must lie in (0, 1)")
    if int(n_max) < 1:
        raise InputError("n_max must be at least 1")
    n_max = int(n_max)
    m, n = _witness_moments(d, delta)
    g_sq = moment(d, "one")
    kinetic = m / n  # ||T^{1/2} f||^2
    overlap = m * m / n  # <g, f>^2
    c = kinetic * (1.0 + lam / 2.0 * (2.0 - eps) * m)
    if lam < critical_couplings(d).lambda_c0 and c >= 0.0:
        warnings.warn(
            f"c_lambda = {c:.4g} >= 0 for delta={delta}, eps={eps}: choose smaller eps, delta",
            WitnessParameterWarning,
        )

    k = np.arange(n_max + 1, dtype=float)
    norms = np.empty_like(k)
    norms[0] = 1.0
    norms[1:] = k[1:] ** -1.5
    ratio = np.zeros_like(k)  # a_{n-2}/a_n
    if n_max >= 2:
        ratio[2] = 2.0 ** 1.25
        kk = k[3:]
        ratio[3:] = (kk / (kk - 2.0)) ** 0.75 * np.sqrt(kk * (kk - 1.0))
    terms = np.zeros_like(k)
    terms[2:] = norms[2:] * k[2:] * c + lam / 2.0 * overlap * norms[2:] * (
        ratio[2:] - k[2:] * (1.0 - eps)
    )
    total_norm = np.cumsum(norms)
    numer = np.cumsum(terms) + lam * g_sq / 4.0 * total_norm
    numer[1:] += norms[1] * (kinetic + lam / 2.0 * overlap)
    return WitnessSeries(
        n=k.astype(np.int64), rayleigh=numer / total_norm, c_lambda=c, delta=delta, eps=eps, lam=lam
    )


def witness_scan(
    d: SpectralDensity,
    lam: float,
    deltas: Sequence[float] = tuple(np.geomspace(1e-3, 1.0, 20)),
    epss: Sequence[float] = tuple(np.geomspace(1e-3, 0.9, 20)),
):
    """Smallest c_lambda over a (delta, eps) grid, with its location."""
    best = (math.inf, None, None)
    for dl in deltas:
        m, n = _witness_moments(d, float(dl))
        for e in epss:
            c = m / n * (1.0 + lam / 2.0 * (2.0 - e) * m)
            if c < best[0]:
                best = (float(c), float(dl), float(e))
    return best
