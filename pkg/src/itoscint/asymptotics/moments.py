"""Limiting field and intensity moments as eps -> 0.

Coordinates follow the rescaled process ``phi(z, r, x; t)``: ``r`` is the
macroscopic offset in source units and ``x, y`` are fine offsets in medium
units.  ``beta_case`` is one of ``beta_gt_1``, ``beta_eq_1`` and
``beta_eq_1_theta_to_0`` (the limit ``theta -> 0`` taken after ``eps -> 0``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.stats import norm, qmc

from .. import medium as med
from ..combinatorics import MAX_PERMANENT, permanent, permanent_batch
from ..source import SourceSpec, coherence_profile, mutual_coherence, temporal_kernel
from .functionals import functional_F, functional_G
from .gaussian import coherence_precision, envelope_profile_ft, gauss_integral, has_gaussian_form
from .temporal import f_p

REGIMES = ("kinetic", "diffusive")
BETA_CASES = ("beta_gt_1", "beta_eq_1", "beta_eq_1_theta_to_0")
QUAD_RTOL = 1e-6
TRUNCATION = 1e-12


class QuadratureError(RuntimeError):
    """Quadrature failed to converge under refinement."""


class OutOfRangeError(ValueError):
    """Requested (case, p) combination is outside the implemented range."""


@dataclass(frozen=True)
class MomentQuery:
    regime: str = "diffusive"
    beta_case: str = "beta_eq_1"
    z: float = 1.0
    r: np.ndarray = field(default_factory=lambda: np.zeros(1))
    X: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    Y: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    T: np.ndarray = field(default_factory=lambda: np.zeros(2))
    k0: float = 1.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.beta_case not in BETA_CASES:
            raise ValueError(f"unknown beta_case {self.beta_case!r}")
        if self.z < 0 or not self.k0 > 0:
            raise ValueError("need z >= 0 and k0 > 0")
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        d = r.size
        X = np.asarray(self.X, dtype=float).reshape(-1, d)
        Y = np.asarray(self.Y, dtype=float).reshape(-1, d)
        T = np.asarray(self.T, dtype=float).ravel()
        if T.size == 0:
            T = np.zeros(X.shape[0] + Y.shape[0])
        if T.size != X.shape[0] + Y.shape[0]:
            raise ValueError("T must hold one instant per point of X and Y")
        for name, val in (("r", r), ("X", X), ("Y", Y), ("T", T)):
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.r.size

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.Y.shape[0]


def query(regime="diffusive", beta_case="beta_eq_1", z=1.0, r=0.0, X=0.0, Y=0.0, T=None, k0=1.0,
          dim=None) -> MomentQuery:
    """Convenience constructor; scalars broadcast to ``dim`` coordinates."""
    d = dim or np.atleast_1d(r).size
    r = np.broadcast_to(np.asarray(r, dtype=float), (d,)) if np.ndim(r) == 0 else np.asarray(r, float)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 0:
        X = np.full((1, d), float(X))
    if Y.ndim == 0:
        Y = np.full((1, d), float(Y))
    X = X.reshape(-1, d)
    Y = Y.reshape(-1, d)
    T = np.zeros(X.shape[0] + Y.shape[0]) if T is None else T
    return MomentQuery(regime, beta_case, float(z), r, X, Y, T, float(k0))


# --------------------------------------------------------------------------
# helpers

def _check(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec) -> None:
    if not (q.dim == source.dim == medium.dim):
        raise ValueError("query, medium and source dimensions differ")


def _vec(x, d):
    x = np.asarray(x, dtype=float).reshape(d)
    return x[0] if d == 1 else x


def _gamma0(source: SourceSpec, r) -> float:
    """``Gamma(r, 0) = J(r, r)``."""
    r = np.asarray(r, dtype=float)
    return float(mutual_coherence(source, _vec(r, source.dim), _vec(r, source.dim)))


def _F(source: SourceSpec, dt) -> float:
    return float(temporal_kernel(source, dt))


def _xi(medium: med.MediumSpec) -> np.ndarray:
    return np.atleast_2d(med.hessian_xi(medium))


def _tensor_quadrature(func, d: int, half_width: float, n0: int = None, n_max: int = None,
                       rtol: float = QUAD_RTOL, what: str = "integral") -> complex:
    """Tensor Gauss-Legendre over ``[-L, L]**d`` doubling nodes until the change is below ``rtol``.

    ``func`` receives an array of nodes with shape ``(n, d)``.
    """
    n = n0 or (64 if d == 1 else 48)
    n_max = n_max or (8192 if d == 1 else 768)
    prev = None
    history = []
    while n <= n_max:
        x, w = np.polynomial.legendre.leggauss(n)
        x = x * half_width
        w = w * half_width
        grids = np.meshgrid(*([x] * d), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=-1)
        val = np.sum(weights * func(nodes))
        history.append((n, val))
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
            return val
        prev = val
        n *= 2
    raise QuadratureError(f"{what}: no convergence to rtol={rtol:g}; refinement history {history}")


def _zeta_half_width(source: SourceSpec) -> float:
    # exp(-r0^2 L^2 / 8) = TRUNCATION
    return math.sqrt(8 * math.log(1 / TRUNCATION)) / source.envelope_r0


def _q_log_nodes(medium, tau, zeta, z, k0) -> np.ndarray:
    """Log of the two-point kernel at offset ``tau`` for each ``zeta`` node (rows)."""
    method = "closed" if medium.kind == "gaussian" else "gl"
    if medium.dim == 1:
        return med.cal_q_log(medium, float(tau[0]), zeta[:, 0], z, 1.0, k0, method)
    return med.cal_q_log(medium, np.asarray(tau, float), zeta, z, 1.0, k0, method)


# --------------------------------------------------------------------------
# second moments

def _kinetic_beta1_m11(q: MomentQuery, medium, source, x, y) -> complex:
    """``int Gamma_hat0(zeta) Qk(y - x, zeta) exp(i zeta.r) dzeta / (2 pi)**d``."""
    d = q.dim
    tau = np.asarray(y, float) - np.asarray(x, float)
    if q.z == 0:
        return complex(_gamma0(source, q.r))

    def integrand(nodes):
        return (envelope_profile_ft(source, nodes if d > 1 else nodes[:, 0])
                * np.exp(_q_log_nodes(medium, tau, nodes, q.z, q.k0) + 1j * nodes @ q.r))

    val = _tensor_quadrature(integrand, d, _zeta_half_width(source), what="kinetic second moment")
    return complex(val / (2 * math.pi) ** d)


def m11_kinetic(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec) -> complex:
    """Limiting two-point field moment in the kinetic regime."""
    _check(q, medium, source)
    if q.p != 1 or q.q != 1:
        raise ValueError("m11 needs exactly one X and one Y point")
    x, y = q.X[0], q.Y[0]
    ft = _F(source, q.T[0] - q.T[1])
    if q.beta_case == "beta_gt_1":
        tau = y - x
        qlog = med.cal_q_log(medium, _vec(tau, q.dim), np.zeros(q.dim) if q.dim > 1 else 0.0,
                             q.z, 1.0, q.k0)
        return complex(ft * _gamma0(source, q.r) * math.exp(qlog))
    return ft * _kinetic_beta1_m11(q, medium, source, x, y)


def _diffusive_beta1_exponent(q: MomentQuery, medium, tau):
    """``(alpha, beta, Xi)`` with exponent ``alpha + beta.zeta + (z**3/24) zeta.Xi.zeta``."""
    xi = _xi(medium)
    alpha = q.k0 ** 2 * q.z / 8 * tau @ xi @ tau
    beta = q.k0 * q.z ** 2 / 8 * xi @ tau
    return alpha, beta, xi


def _diffusive_beta1_m11(q: MomentQuery, medium, source, x, y, method="closed") -> complex:
    d = q.dim
    tau = np.asarray(y, float) - np.asarray(x, float)
    alpha, beta, xi = _diffusive_beta1_exponent(q, medium, tau)
    if q.z == 0:
        return complex(_gamma0(source, q.r))
    if method == "closed":
        r0 = source.envelope_r0
        P = (r0 ** 2 / 4) * np.eye(d) - (q.z ** 3 / 12) * xi
        pref = (math.pi * r0 ** 2 / 2) ** (d / 2) / (2 * math.pi) ** d
        return pref * gauss_integral(P, beta + 1j * q.r, alpha)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")

    def integrand(nodes):
        quad = q.z ** 3 / 24 * np.einsum("ni,ij,nj->n", nodes, xi, nodes)
        return (envelope_profile_ft(source, nodes if d > 1 else nodes[:, 0])
                * np.exp(alpha + nodes @ beta + quad + 1j * nodes @ q.r))

    return complex(_tensor_quadrature(integrand, d, _zeta_half_width(source),
                                      what="diffusive second moment") / (2 * math.pi) ** d)


def m11_diffusive(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec, method: str = "closed") -> complex:
    """Limiting two-point field moment in the diffusive regime."""
    _check(q, medium, source)
    if q.p != 1 or q.q != 1:
        raise ValueError("m11 needs exactly one X and one Y point")
    x, y = q.X[0], q.Y[0]
    ft = _F(source, q.T[0] - q.T[1])
    if q.beta_case == "beta_gt_1":
        tau = y - x
        xi = _xi(medium)
        return complex(ft * _gamma0(source, q.r) * math.exp(q.k0 ** 2 * q.z / 8 * tau @ xi @ tau))
    return ft * _diffusive_beta1_m11(q, medium, source, x, y, method)


def heat_covariance(z: float, medium: med.MediumSpec) -> np.ndarray:
    """Covariance ``-z**3 Xi / 12`` of the mean-intensity heat kernel."""
    return -(z ** 3 / 12) * _xi(medium)


def mean_intensity(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec) -> float:
    """Limiting mean intensity at offset ``r``."""
    _check(q, medium, source)
    if q.beta_case == "beta_gt_1":
        return _gamma0(source, q.r)
    x = np.zeros(q.dim)
    if q.regime == "kinetic":
        return _kinetic_beta1_m11(q, medium, source, x, x).real
    if q.z == 0:
        return _gamma0(source, q.r)
    # Gamma(., 0) is a Gaussian with covariance r0^2/4; convolve with the heat kernel
    d = q.dim
    r0 = source.envelope_r0
    cov = (r0 ** 2 / 4) * np.eye(d) + heat_covariance(q.z, medium)
    mass = (math.pi * r0 ** 2 / 2) ** (d / 2)
    quad = q.r @ np.linalg.solve(cov, q.r)
    return float(mass * math.exp(-0.5 * quad) / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov)))


# --------------------------------------------------------------------------
# chi

def chi(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec, method: str = "auto") -> float:
    """Cross-correlation part of the second intensity moment (diffusive regime).

    ``method`` is ``'closed'`` (gaussian and fully coherent sources),
    ``'quadrature'`` (any Schell source) or ``'auto'``.  At ``z = 0`` the
    heat kernels collapse to point masses and ``chi = Gamma(r, 0)**2``.
    """
    _check(q, medium, source)
    if q.beta_case == "beta_gt_1":
        return mean_intensity(q, medium, source) ** 2
    if q.beta_case == "beta_eq_1_theta_to_0":
        return 0.0
    if q.z == 0:
        return _gamma0(source, q.r) ** 2
    if method == "auto":
        method = "closed" if has_gaussian_form(source) else "quadrature"
    if method == "closed":
        return _chi_closed(q, medium, source)
    if method == "quadrature":
        return _chi_quadrature(q, medium, source)
    raise ValueError(f"unknown method {method!r}")


def _chi_closed(q, medium, source) -> float:
    """``int G(r - x) G(r - y) J(x, y)**2 dx dy`` as one Gaussian integral."""
    d = q.dim
    cov = heat_covariance(q.z, medium)
    prec = np.linalg.inv(cov)
    P = 2 * coherence_precision(source, [(0, 1)], 2)
    P[:d, :d] += prec
    P[d:, d:] += prec
    b = np.concatenate([prec @ q.r, prec @ q.r])
    c = -q.r @ prec @ q.r
    norm_g = 1.0 / ((2 * math.pi) ** d * np.linalg.det(cov))
    return float((norm_g * gauss_integral(P, b, c)).real)


def _isotropic_eigen(xi: np.ndarray) -> float:
    lam = xi[0, 0]
    if not np.allclose(xi, lam * np.eye(xi.shape[0]), rtol=1e-12, atol=0):
        raise ValueError("chi quadrature assumes an isotropic Hessian")
    if not lam < 0:
        raise ValueError("Hessian must be negative definite")
    return lam


def _chi_quadrature(q, medium, source) -> float:
    """Centre/difference form, factorised over centre and difference.

    With the Gaussian envelope, ``Gamma(r', s)**2`` splits into
    ``exp(-4|r'|**2/r0**2)`` times ``exp(-theta**2 |s|**2/r0**2) g(theta s)**2``,
    so the ``2d``-dimensional integral is a closed Gaussian in ``r'`` times a
    ``d``-dimensional (radial) quadrature in ``s``.
    """
    d = q.dim
    th = source.theta
    r0 = source.envelope_r0
    lam = _isotropic_eigen(_xi(medium))
    z3 = q.z ** 3
    # centre factor: int exp((12/z^3) lam^-1 |r - r'|^2 - 4 |r'|^2 / r0^2) dr'
    a1 = -24.0 / (z3 * lam)
    a2 = 8.0 / r0 ** 2
    centre = (2 * math.pi / (a1 + a2)) ** (d / 2) * math.exp(-0.5 * a1 * a2 / (a1 + a2) * (q.r @ q.r))
    # difference factor: radial integral
    kappa = th ** 2 * (-3.0 / (z3 * lam) + 1.0 / r0 ** 2)
    s_max = math.sqrt(math.log(1 / TRUNCATION) / kappa)

    def g2(s):
        pt = th * s if d == 1 else np.array([th * s, 0.0])
        return float(coherence_profile(source, pt)) ** 2

    if d == 1:
        diff, _ = integrate.quad(lambda s: 2 * math.exp(-kappa * s * s) * g2(s), 0, s_max,
                                 epsabs=0, epsrel=1e-10, limit=2000)
    else:
        diff, _ = integrate.quad(lambda s: 2 * math.pi * s * math.exp(-kappa * s * s) * g2(s), 0, s_max,
                                 epsabs=0, epsrel=1e-10, limit=2000)
    pref = (12 * th / z3) ** d / abs(lam ** d) / (2 * math.pi) ** d
    return float(pref * centre * diff)


# --------------------------------------------------------------------------
# higher moments

def _source_moment_at_centre(q: MomentQuery, source: SourceSpec, p: int) -> float:
    """``S_p(r, ..., r; T) = Gamma(r, 0)**p perm(F(t_j - t'_l))``."""
    Ft = temporal_kernel(source, q.T[:p, None] - q.T[None, p:])
    return _gamma0(source, q.r) ** p * float(permanent(Ft))


def mpp_limit(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec, p: int = None,
              method: str = "auto") -> complex:
    """Limiting ``p + p`` field moment at points ``X``, ``Y`` and instants ``T``."""
    _check(q, medium, source)
    if q.p != q.q:
        return 0.0
    p = q.p if p is None else p
    if p != q.p:
        raise ValueError("p must match the number of X and Y points")
    k0, z, d = q.k0, q.z, q.dim
    r0m = medium.sigma_R2
    if q.regime == "kinetic":
        if q.beta_case == "beta_gt_1":
            if p > 6:
                raise OutOfRangeError("kinetic beta>1 implemented for p <= 6")
            h = np.full(p, math.exp(-k0 ** 2 * r0m * z / 8))
            g = np.empty((p, p))
            for j, l in itertools.product(range(p), range(p)):
                tau = q.Y[l] - q.X[j]
                g[j, l] = math.exp(med.cal_q_log(medium, _vec(tau, d), np.zeros(d) if d > 1 else 0.0,
                                                 z, 1.0, k0))
            return _source_moment_at_centre(q, source, p) * functional_F(h, h, g)
        if q.beta_case == "beta_eq_1_theta_to_0":
            if p > 6:
                raise OutOfRangeError("kinetic theta->0 implemented for p <= 6")
            g0 = _gamma0(source, q.r)
            Ft = temporal_kernel(source, q.T[:p, None] - q.T[None, p:])
            h = Ft * g0 * math.exp(-k0 ** 2 * r0m * z / 4)
            g = np.empty((p, p), dtype=complex)
            for j, l in itertools.product(range(p), range(p)):
                g[j, l] = Ft[j, l] * _kinetic_beta1_m11(q, medium, source, q.X[j], q.Y[l])
            return functional_G(h, g)
        if p == 1:
            return m11_kinetic(q, medium, source)
        if p == 2:
            from .kinetic import kinetic_beta1_m22
            return kinetic_beta1_m22(q, medium, source)
        raise OutOfRangeError("kinetic beta=1 convolution implemented for p <= 2")
    # diffusive
    xi = _xi(medium)
    if q.beta_case == "beta_gt_1":
        if p > MAX_PERMANENT:
            raise OutOfRangeError(f"diffusive beta>1 implemented for p <= {MAX_PERMANENT}")
        tau = q.Y[None, :, :] - q.X[:, None, :]
        m = np.exp(k0 ** 2 * z / 8 * np.einsum("jli,ik,jlk->jl", tau, xi, tau))
        return _source_moment_at_centre(q, source, p) * permanent(m)
    if q.beta_case == "beta_eq_1_theta_to_0":
        if p > MAX_PERMANENT:
            raise OutOfRangeError(f"diffusive theta->0 implemented for p <= {MAX_PERMANENT}")
        Ft = temporal_kernel(source, q.T[:p, None] - q.T[None, p:])
        m = np.empty((p, p), dtype=complex)
        for j, l in itertools.product(range(p), range(p)):
            m[j, l] = Ft[j, l] * _diffusive_beta1_m11(q, medium, source, q.X[j], q.Y[l])
        return permanent(m)
    if p > 4:
        raise OutOfRangeError("diffusive beta=1 convolution implemented for p <= 4")
    if method == "auto":
        method = "closed" if has_gaussian_form(source) else "qmc"
    if method == "closed":
        return _diffusive_beta1_mpp_closed(q, medium, source, p)
    if method == "qmc":
        return _diffusive_beta1_mpp_qmc(q, medium, source, p)[0]
    raise ValueError(f"unknown method {method!r}")


def _kernel_terms(q: MomentQuery, medium, j: int, l: int):
    """Linear coefficient and constant of the second-moment kernel in ``x'``.

    ``M11inf(z, r - x', x_j, y_l) = N exp(-x'.C^-1.x'/2 + x'.b + c)`` with
    ``C`` the heat covariance.
    """
    tau = q.Y[l] - q.X[j]
    alpha, beta, _ = _diffusive_beta1_exponent(q, medium, tau)
    cov = heat_covariance(q.z, medium)
    prec = np.linalg.inv(cov)
    r = q.r
    b = prec @ r - 1j * prec @ beta
    c = -0.5 * r @ prec @ r + 1j * r @ prec @ beta + 0.5 * beta @ prec @ beta + alpha
    return b, c


def _diffusive_beta1_mpp_closed(q: MomentQuery, medium, source, p: int) -> complex:
    d = q.dim
    if q.z == 0:
        return math.factorial(p) * _source_moment_at_centre(q, source, p)
    cov = heat_covariance(q.z, medium)
    prec = np.linalg.inv(cov)
    norm_k = ((2 * math.pi) ** d * np.linalg.det(cov)) ** -0.5
    Ft = temporal_kernel(source, q.T[:p, None] - q.T[None, p:])
    total = 0.0
    for pi in itertools.permutations(range(p)):
        inv_pi = np.argsort(pi)
        b = np.zeros(p * d, dtype=complex)
        c = 0.0
        for j in range(p):
            bj, cj = _kernel_terms(q, medium, j, pi[j])
            b[j * d:(j + 1) * d] = bj
            c += cj
        heat = np.kron(np.eye(p), prec)
        for sigma in itertools.permutations(range(p)):
            weight = math.prod(Ft[j, sigma[j]] for j in range(p))
            if weight == 0:
                continue
            pairs = [(j, int(inv_pi[sigma[j]])) for j in range(p)]
            P = heat + coherence_precision(source, pairs, p)
            total += weight * gauss_integral(P, b, c)
    return complex(total * norm_k ** p)


def _heat_samples(q: MomentQuery, medium, p: int, n: int, seed: int):
    """Scrambled Sobol points of ``p`` independent heat-kernel displacements around ``r``."""
    d = q.dim
    chol = np.linalg.cholesky(heat_covariance(q.z, medium))
    u = qmc.Sobol(p * d, scramble=True, seed=seed).random(n)
    u = np.clip(u, 1e-16, 1 - 1e-16)
    g = norm.ppf(u).reshape(n, p, d)
    return q.r + g @ chol.T


def _coherence_matrix(source, A, B) -> np.ndarray:
    """``J(a_j, b_l)`` for stacks ``A (n, p, d)`` and ``B (n, p, d)``."""
    if source.dim == 1:
        return mutual_coherence(source, A[:, :, None, 0], B[:, None, :, 0])
    return mutual_coherence(source, A[:, :, None, :], B[:, None, :, :])


def _diffusive_beta1_mpp_qmc(q: MomentQuery, medium, source, p: int, n: int = 2 ** 14,
                             replicates: int = 8) -> tuple:
    """Importance-sampled estimate with ``x'_j`` drawn from the heat kernel around ``r``."""
    if q.z == 0:
        return math.factorial(p) * _source_moment_at_centre(q, source, p), 0.0
    cov = heat_covariance(q.z, medium)
    prec = np.linalg.inv(cov)
    Ft = temporal_kernel(source, q.T[:p, None] - q.T[None, p:])
    ests = []
    for rep in range(replicates):
        Xs = _heat_samples(q, medium, p, n, seed=rep)
        acc = np.zeros(n, dtype=complex)
        for pi in itertools.permutations(range(p)):
            inv_pi = np.argsort(pi)
            phase = np.zeros(n, dtype=complex)
            for j in range(p):
                tau = q.Y[pi[j]] - q.X[j]
                alpha, beta, _ = _diffusive_beta1_exponent(q, medium, tau)
                u = q.r - Xs[:, j, :]
                phase += 1j * u @ (prec @ beta) + 0.5 * beta @ prec @ beta + alpha
            Yp = Xs[:, inv_pi, :]
            A = Ft * _coherence_matrix(source, Xs, Yp)
            acc += np.exp(phase) * permanent_batch(A)
        ests.append(acc.mean())
    ests = np.array(ests)
    return complex(ests.mean()), float(np.abs(ests - ests.mean()).std(ddof=1) / math.sqrt(replicates))


def intensity_moment_estimate(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec, p: int,
                              method: str = "auto") -> tuple:
    """``(E[I**p], error)`` in the diffusive regime."""
    _check(q, medium, source)
    if p < 1:
        raise ValueError("p must be >= 1")
    if q.beta_case == "beta_gt_1":
        if p > MAX_PERMANENT:
            raise OutOfRangeError(f"p <= {MAX_PERMANENT}")
        return _gamma0(source, q.r) ** p * math.factorial(p) ** 2, 0.0
    if q.beta_case == "beta_eq_1_theta_to_0":
        return math.factorial(p) * mean_intensity(q, medium, source) ** p, 0.0
    if p > 4:
        raise OutOfRangeError("beta=1 intensity moments implemented for p <= 4")
    if p == 1:
        return mean_intensity(q, medium, source), 0.0
    d = q.dim
    coincident = query(q.regime, q.beta_case, q.z, q.r, np.zeros((p, d)), np.zeros((p, d)),
                       np.zeros(2 * p), q.k0, dim=d)
    if method == "auto":
        method = "closed" if has_gaussian_form(source) else "qmc"
    if method == "closed":
        return float(_diffusive_beta1_mpp_closed(coincident, medium, source, p).real), 0.0
    if method == "qmc":
        val, err = _diffusive_beta1_mpp_qmc(coincident, medium, source, p)
        return float(val.real), err
    raise ValueError(f"unknown method {method!r}")


def intensity_moment(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec, p: int,
                     method: str = "auto") -> float:
    return intensity_moment_estimate(q, medium, source, p, method)[0]


def time_avg_intensity_moment(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec, p: int,
                              T: float, method: str = "auto") -> float:
    """``E[I_T**p] = E[I**p] F_p(T) / p!``."""
    return intensity_moment(q, medium, source, p, method) * f_p(p, T, source.tau_s, source) / math.factorial(p)
