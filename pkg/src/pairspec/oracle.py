"""Finite-mode ground truth for the continuum formulas.

The one-particle space is replaced by N modes with frequencies ``omega`` and
couplings ``g``.  The quadratic Hamiltonian then has normal modes
``nu = sqrt(eig(Omega^2 + lam (sqrt(omega) g)(sqrt(omega) g)^T))``; these are
computed twice, by a dense symmetric eigensolver and by bisection on the
rank-one secular equation, and the two must agree.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from . import quadrature
from .density import SpectralDensity
from .errors import DimensionError, DomainError, InputError, NumericError, RegimeError

RULES = ("gauss_transformed", "uniform_log")
AGREEMENT_REL = 1e-12
DEFAULT_DIM_CAP = 20000
DEFAULT_TAIL_TOL = 1e-15


@dataclass(frozen=True)
class DiscreteModel:
    omega: np.ndarray
    g: np.ndarray
    source: str = "manual"

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float).ravel()
        g = np.asarray(self.g, dtype=float).ravel()
        if om.shape != g.shape or om.size == 0:
            raise InputError("omega and g must be nonempty vectors of equal length")
        if not np.all(np.isfinite(om)) or not np.all(np.isfinite(g)):
            raise InputError("omega and g must be finite")
        if not np.all(om > 0):
            raise InputError("mode frequencies must be positive")
        if om.size > 1 and not np.all(np.diff(om) > 0):
            raise InputError("mode frequencies must be strictly increasing")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return int(self.omega.size)

    @property
    def g_norm_sq(self) -> float:
        return float(np.sum(self.g ** 2))

    @property
    def lambda_c0(self) -> float:
        """-1 / sum(g^2/omega): below it the quadratic form loses positivity."""
        return -1.0 / float(np.sum(self.g ** 2 / self.omega))


@dataclass(frozen=True)
class BogoliubovPair:
    U: np.ndarray
    V: np.ndarray
    nu: np.ndarray
    omega: np.ndarray
    residuals: Tuple[float, float, float, float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals)

    @property
    def hs_norm_sq(self) -> float:
        """||V||_F^2."""
        return float(np.sum(self.V ** 2))

    @property
    def weighted_trace(self) -> float:
        """Tr(N^{1/2} V^T V N^{1/2}) with N = diag(nu)."""
        return float(np.sum(self.nu * np.sum(self.V ** 2, axis=0)))


@dataclass(frozen=True)
class FockResult:
    eigenvalues: np.ndarray
    dim: int
    n_c: int
    cutoff_dependent: bool


# ------------------------------------------------------------------ discretization


def _tail_cut(d: SpectralDensity, tail_tol: float) -> float:
    """Smallest mu whose tail mass of (1+mu) psi is below tail_tol times the total."""
    f = lambda m: (1.0 + m) * d.value(m)
    total = quadrature.integrate(f, d.e0, breakpoints=d.breakpoints).value
    if total <= 0.0:
        raise InputError("density has no mass")
    target = tail_tol * total
    tail = lambda x: quadrature.integrate(f, x, breakpoints=d.breakpoints).value
    step = 1.0
    hi = d.e0 + step
    while tail(hi) > target:
        step *= 2.0
        hi = d.e0 + step
        if step > 1e8:
            return hi
    lo = d.e0 + step / 2.0 if step > 1.0 else d.e0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if tail(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def discretize(
    d: SpectralDensity,
    n: int,
    rule: str = "gauss_transformed",
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> DiscreteModel:
    """N-mode image of the density: omega_j = mu_j, g_j = sqrt(w_j psi(mu_j)).

    Nodes are placed on ``[e0, mu_max]`` where the tail beyond ``mu_max``
    carries at most ``tail_tol`` of the mass of ``(1+mu) psi``; without this
    cut the largest frequencies swamp the dense eigensolver's accuracy.
    """
    if int(n) != n or n < 1:
        raise InputError(f"N must be a positive integer, got {n!r}")
    n = int(n)
    mu_max = _tail_cut(d, tail_tol)
    if rule == "gauss_transformed":
        mu, w = quadrature.gauss_halfline(n, d.e0, mu_max)
    elif rule == "uniform_log":
        lo = math.log(1e-8 * max(1.0, d.e0))
        hi = math.log(mu_max - d.e0)
        du = (hi - lo) / n
        u = lo + du * (np.arange(n) + 0.5)
        mu = d.e0 + np.exp(u)
        w = np.exp(u) * du
    else:
        raise InputError(f"unknown rule {rule!r}; expected one of {RULES}")
    g = np.sqrt(w * d(mu))
    return DiscreteModel(mu, g, source=f"{d.label or 'density'}/{rule}/N={n}")


# ------------------------------------------------------------------ normal modes


def dynamical_matrix(m: DiscreteModel, lam: float) -> np.ndarray:
    z = np.sqrt(m.omega) * m.g
    a = np.diag(m.omega ** 2) + lam * np.outer(z, z)
    return 0.5 * (a + a.T)


def _dense_squares(m: DiscreteModel, lam: float):
    return np.linalg.eigh(dynamical_matrix(m, lam))


def _secular_squares(m: DiscreteModel, lam: float) -> np.ndarray:
    """Eigenvalues of diag(omega^2) + lam z z^T by bisection on the secular equation.

    Each root is bracketed by adjacent poles omega_j^2 (interlacing) and
    located as an offset from its nearer pole, with pole differences formed
    as (omega_j - omega_o)(omega_j + omega_o) to avoid cancellation.
    """
    om = m.omega
    z2 = om * m.g ** 2
    if lam == 0.0:
        return om ** 2
    active = np.flatnonzero(z2 > 0.0)
    free = np.flatnonzero(z2 == 0.0)
    out = [om[free] ** 2]
    if active.size:
        w = om[active]
        zz = z2[active]
        k = w.size
        spread = abs(lam) * float(np.sum(zz))
        # pole index to the left / right of each root; -1 / k mark the open end
        if lam > 0:
            left = np.arange(k)
            right = np.arange(1, k + 1)
        else:
            left = np.arange(-1, k - 1)
            right = np.arange(k)
        has_left = left >= 0
        has_right = right < k
        li = np.clip(left, 0, k - 1)
        ri = np.clip(right, 0, k - 1)

        def diffs(origin_idx):
            wo = w[origin_idx][:, None]
            return (w[None, :] - wo) * (w[None, :] + wo)

        def secular(delta, tau):
            # tau may land exactly on a pole when a root sits on it; +-inf still orders correctly
            with np.errstate(divide="ignore", invalid="ignore"):
                return 1.0 + lam * np.sum(zz[None, :] / (delta - tau[:, None]), axis=1)

        # bracket widths in the variable x = omega^2
        width = np.where(
            has_left & has_right,
            (w[ri] - w[li]) * (w[ri] + w[li]),
            spread,
        )
        # choose the origin pole nearer to the root: test the midpoint from the left pole
        origin = np.where(has_left, li, ri)
        delta = diffs(origin)
        lo_tau = np.where(has_left, 0.0, -width)
        hi_tau = np.where(has_left, width, 0.0)
        both = has_left & has_right
        if np.any(both):
            mid = 0.5 * (lo_tau + hi_tau)
            f_mid = secular(delta, mid)
            # secular is increasing in x for lam > 0 and decreasing for lam < 0
            root_left = np.where(lam > 0, f_mid > 0, f_mid < 0)
            use_right = both & ~root_left
            origin = np.where(use_right, ri, origin)
            lo_tau = np.where(use_right, -0.5 * width, np.where(both, 0.0, lo_tau))
            hi_tau = np.where(use_right, 0.0, np.where(both, 0.5 * width, hi_tau))
            delta = diffs(origin)
        sign = 1.0 if lam > 0 else -1.0
        base = w[origin] ** 2
        for it in range(200):
            if it % 8 == 0 and np.all(hi_tau - lo_tau <= 4 * np.finfo(float).eps * np.maximum(np.abs(lo_tau), np.abs(hi_tau))):
                break
            mid = 0.5 * (lo_tau + hi_tau)
            f = sign * secular(delta, mid)
            go_left = f > 0
            hi_tau = np.where(go_left, mid, hi_tau)
            lo_tau = np.where(go_left, lo_tau, mid)
        tau = 0.5 * (lo_tau + hi_tau)
        out.append(base + tau)
    return np.sort(np.concatenate(out))


def normal_mode_squares(m: DiscreteModel, lam: float):
    """(dense, secular) eigenvalues of the dynamical matrix, both ascending."""
    dense, _ = _dense_squares(m, lam)
    return dense, _secular_squares(m, lam)


def normal_modes(m: DiscreteModel, lam: float) -> np.ndarray:
    """Normal-mode frequencies nu (ascending), checked across both solvers."""
    dense, secular = normal_mode_squares(m, lam)
    scale = float(np.max(m.omega) ** 2 + abs(lam) * np.sum(m.omega * m.g ** 2))
    floor = 64 * np.finfo(float).eps * scale
    if dense[0] < -floor:
        err = RegimeError(
            f"dynamical matrix has a negative eigenvalue {dense[0]:.6g}: "
            f"lam={lam} is below the discrete lambda_c0={m.lambda_c0:.6g}"
        )
        err.smallest_eigenvalue = float(dense[0])
        raise err
    nu_dense = np.sqrt(np.maximum(dense, 0.0))
    # squared frequencies are only determined to a few ulps of the matrix scale
    gap = np.abs(dense - secular)
    allowed = AGREEMENT_REL * np.abs(dense) + floor
    if np.any(gap > allowed):
        worst = int(np.argmax(gap / allowed))
        raise NumericError(
            f"dense and secular normal modes disagree: nu^2 = {dense[worst]:.17g} "
            f"vs {secular[worst]:.17g}",
            values={"dense": dense, "secular": secular},
        )
    return nu_dense


def discrete_ground_energy(m: DiscreteModel, lam: float) -> float:
    """Zero-point shift (1/2) sum(nu - omega)."""
    if lam == 0.0:
        return 0.0
    nu = normal_modes(m, lam)
    return float(0.5 * np.sum(nu - m.omega))


# ------------------------------------------------------------------ Bogoliubov pair


def bogoliubov_pair(m: DiscreteModel, lam: float) -> BogoliubovPair:
    """U, V = (Omega^{-1/2} O N^{1/2} +- Omega^{1/2} O N^{-1/2}) / 2.

    O is the orthogonal eigenbasis of the dynamical matrix and N = diag(nu).
    The residuals are the Frobenius norms of U^T U - V^T V - I,
    U^T V - V^T U, U U^T - V V^T - I and U V^T - V U^T.
    """
    normal_modes(m, lam)  # raises on the unbounded side and cross-checks solvers
    evals, o = _dense_squares(m, lam)
    scale = float(np.max(m.omega) ** 2 + abs(lam) * np.sum(m.omega * m.g ** 2))
    if evals[0] <= 64 * np.finfo(float).eps * scale:
        raise DomainError("a normal mode has zero frequency; the pair is degenerate")
    nu = np.sqrt(evals)
    sq_om = np.sqrt(m.omega)[:, None]
    sq_nu = np.sqrt(nu)[None, :]
    left = o / sq_om * sq_nu
    right = o * sq_om / sq_nu
    U = 0.5 * (left + right)
    V = 0.5 * (left - right)
    eye = np.eye(m.n)
    fro = lambda a: float(np.linalg.norm(a))
    res = (
        fro(U.T @ U - V.T @ V - eye),
        fro(U.T @ V - V.T @ U),
        fro(U @ U.T - V @ V.T - eye),
        fro(U @ V.T - V @ U.T),
    )
    return BogoliubovPair(U=U, V=V, nu=nu, omega=m.omega.copy(), residuals=res)


# ------------------------------------------------------------------ truncated Fock space


def fock_dimension(n_modes: int, n_c: int) -> int:
    return math.comb(n_modes + n_c, n_c)


def fock_basis(n_modes: int, n_c: int):
    """Occupation vectors with total <= n_c, by total and then lexicographically."""
    basis = []
    for total in range(n_c + 1):
        for bars in itertools.combinations(range(total + n_modes - 1), n_modes - 1):
            cuts = (-1,) + bars + (total + n_modes - 1,)
            basis.append(tuple(cuts[i + 1] - cuts[i] - 1 for i in range(n_modes)))
        # combinations come out lexicographically descending in occupations
        start = len(basis) - math.comb(total + n_modes - 1, n_modes - 1)
        basis[start:] = sorted(basis[start:])
    return basis


def _lowering(basis, index, j):
    rows, cols, vals = [], [], []
    for col, occ in enumerate(basis):
        k = occ[j]
        if k:
            target = occ[:j] + (k - 1,) + occ[j + 1 :]
            rows.append(index[target])
            cols.append(col)
            vals.append(math.sqrt(k))
    n = len(basis)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def fock_hamiltonian(m: DiscreteModel, lam: float, n_c: int, dim_cap: int = DEFAULT_DIM_CAP):
    """Sparse matrix of sum omega a^* a + (lam/2) Phi(g)^2 on the truncated space.

    The square of the field is normal ordered first, so the matrix is the
    exact compression of the Hamiltonian to occupations <= n_c.
    """
    dim = fock_dimension(m.n, n_c)
    if dim > dim_cap:
        raise DimensionError(f"truncated Fock space has dimension {dim} > cap {dim_cap}")
    basis = fock_basis(m.n, n_c)
    index = {occ: i for i, occ in enumerate(basis)}
    occ = np.array(basis, dtype=float).reshape(dim, m.n)
    h = sparse.diags(occ @ m.omega).tocsr()
    if lam != 0.0:
        a = sparse.csr_matrix((dim, dim))
        for j in range(m.n):
            if m.g[j] != 0.0:
                a = a + m.g[j] * _lowering(basis, index, j)
        ad = a.T.tocsr()
        phi_sq = 0.5 * (a @ a + ad @ ad + 2.0 * (ad @ a)) + 0.5 * m.g_norm_sq * sparse.identity(dim)
        h = h + 0.5 * lam * phi_sq
    return sparse.csr_matrix(h), basis


def fock_diagonalize(
    m: DiscreteModel, lam: float, n_c: int, k: int = 6, dim_cap: int = DEFAULT_DIM_CAP
) -> FockResult:
    """Lowest ``k`` eigenvalues of the truncated Hamiltonian."""
    if n_c < 0:
        raise InputError("n_c must be nonnegative")
    h, _ = fock_hamiltonian(m, lam, n_c, dim_cap)
    dim = h.shape[0]
    k = min(k, dim)
    if dim <= 3000 or k >= dim - 1:
        ev = np.linalg.eigvalsh(h.toarray())[:k]
    else:
        v0 = np.ones(dim) / math.sqrt(dim)
        ev = np.sort(sparse_linalg.eigsh(h, k=k, which="SA", v0=v0, tol=1e-12)[0])
    return FockResult(
        eigenvalues=np.asarray(ev), dim=dim, n_c=n_c, cutoff_dependent=bool(lam < m.lambda_c0)
    )
