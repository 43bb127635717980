"""Exact finite-N MSE matrices of the nine extractors under the true covariance.

``true_mse`` is the actual estimation-error covariance; ``believed_mse`` is
what an extractor would report if its assumed covariance were correct.  The
two agree for the correctly specified (full) methods.

Kalman MSEs have no closed form.  :func:`mse_kf_riccati` iterates the
filter's own Riccati recursion and, for a mis-specified filter, the true-MSE
recursion that feeds on both sequences:

    Pi_t  = Phi P_{t-1}   Phi' + Sigma_eta        (true one-step MSE)
    Pi0_t = Phi P0_{t-1}  Phi' + Sigma_eta        (believed one-step MSE)
    K_t   = Pi0_t Lambda' (Lambda Pi0_t Lambda' + W)^{-1}
    P_t   = Pi_t + K_t (Lambda Pi_t Lambda' + Sigma) K_t'
            - K_t Lambda Pi_t - Pi_t Lambda' K_t'
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from . import _linalg
from .estimators import Method, working_cov
from .exceptions import NoConvergence, NonPsdPropagation
from .model import CovarianceSpec, CovMode

__all__ = [
    "MseReport",
    "SteadyStateSolve",
    "table1_terms",
    "mse_ls",
    "mse_lp",
    "mse_kf_riccati",
    "theoretical_mse",
    "asymptotic_variance",
    "equivalence_gap",
    "DEFAULT_TOL",
    "DEFAULT_HORIZON",
]

DEFAULT_TOL = 1e-12
DEFAULT_HORIZON = 10_000


@dataclass(frozen=True, eq=False)
class SteadyStateSolve:
    """Converged Riccati iteration.

    ``p_bar`` is the steady filtered MSE, ``pi_bar`` the one-step MSE
    ``Phi p_bar Phi' + Sigma_eta`` and ``k_bar`` the limiting gain used by
    the filter.  ``residual`` is the last successive Frobenius difference.
    """

    p_bar: np.ndarray
    pi_bar: np.ndarray
    k_bar: np.ndarray
    iterations: int
    residual: float


@dataclass(frozen=True, eq=False)
class MseReport:
    method: Method
    true_mse: np.ndarray
    believed_mse: np.ndarray
    time_series: np.ndarray | None = None
    believed_series: np.ndarray | None = None
    steady_state: SteadyStateSolve | None = None
    believed_steady_state: SteadyStateSolve | None = None
    debug: dict = field(default_factory=dict, repr=False)

    def mse_at(self, t):
        """True MSE at period ``t`` (1-based); steady state past the transient."""
        if self.time_series is None:
            return self.true_mse
        if t < 1:
            raise ValueError("periods are numbered from 1")
        return self.time_series[min(t, len(self.time_series)) - 1]

    def believed_at(self, t):
        if self.believed_series is None:
            return self.believed_mse
        return self.believed_series[min(t, len(self.believed_series)) - 1]


def _solve_sigma(params, b):
    return cho_solve(params.idio_factor, b)


def table1_terms(params, spherical_variance=None, steady_p=None):
    """Intermediates of the summary formulas.

    Returns a dict with ``Omega``, ``Omega_star``, ``A``, ``B``, ``C`` and,
    when ``steady_p`` is given, ``D = Phi P Phi' + Sigma_eta``.  ``A``,
    ``B`` and ``C`` are built from explicit n x n factorizations.
    """
    lam = params.loadings
    d = params.idio_diag
    s2 = float(np.mean(d)) if spherical_variance is None else float(spherical_variance)
    gram = lam @ lam.T
    sigma = np.asarray(params.idio_cov)
    sigma_star = np.diag(d)

    def sandwich(work, truth):
        m = _linalg.spd_solve(gram + work, lam)
        return _linalg.symmetrize(m.T @ (gram + truth) @ m - 2.0 * lam.T @ m)

    out = {
        "Omega": params.signal_to_noise,
        "Omega_star": _linalg.symmetrize(lam.T @ (lam / d[:, None])),
        "A": sandwich(s2 * np.eye(params.n), sigma),
        "B": sandwich(s2 * np.eye(params.n), sigma_star),
        "C": sandwich(sigma_star, sigma),
        "spherical_variance": s2,
    }
    if steady_p is not None:
        phi = params.factor_ar
        out["D"] = _linalg.symmetrize(phi @ steady_p @ phi.T + params.state_noise_cov)
    return out


def mse_ls(params, assumed):
    """MSE of the least-squares extractor under ``assumed``.

    ``true_mse`` is the sandwich
    ``(L'W^-1 L)^-1 L'W^-1 Sigma W^-1 L (L'W^-1 L)^-1``; ``believed_mse`` the
    Gauss-Markov bound ``(L'W^-1 L)^-1``.
    """
    wc = working_cov(params, assumed)
    method = Method.of("LS", wc.spec.mode)
    bread = _linalg.normal_inv(wc.omega)
    if wc.spec.mode is CovMode.FULL:
        true = bread
    else:
        wl = wc.weighted_loadings
        meat = _linalg.symmetrize(wl.T @ params.idio_cov @ wl)
        true = _linalg.symmetrize(bread @ meat @ bread)
    return MseReport(method, true, bread, debug={"Omega": wc.omega})


def mse_lp(params, assumed):
    """MSE of the static linear projection under ``assumed``.

    The true MSE of a mis-specified projection uses the n x n form
    ``I + L'(LL'+W)^-1 (LL'+Sigma) (LL'+W)^-1 L - 2 L'(LL'+W)^-1 L``.
    """
    wc = working_cov(params, assumed)
    method = Method.of("LP", wc.spec.mode)
    r = params.r
    believed = _linalg.normal_inv(wc.omega + np.eye(r))
    debug = {"Omega": wc.omega}
    if wc.spec.mode is CovMode.FULL:
        true = believed
    else:
        lam = params.loadings
        gram = lam @ lam.T
        work = wc.dense(params)
        m = _linalg.spd_solve(gram + work, lam, "Lambda Lambda' + W")
        cross = _linalg.symmetrize(m.T @ (gram + params.idio_cov) @ m - 2.0 * lam.T @ m)
        true = _linalg.symmetrize(np.eye(r) + cross)
        debug["A" if wc.spec.mode is CovMode.SPHERICAL else "C"] = cross
    return MseReport(method, true, believed, debug=debug)


def _believed_step(p0, phi, eta, omega_w):
    """One step of the filter's own Riccati recursion; returns (Pi0, P0, G).

    The believed filtered MSE ``(I - G Omega) Pi0`` equals ``G`` exactly, so
    ``G`` is returned twice rather than formed by subtraction.
    """
    pi0 = _linalg.symmetrize(phi @ p0 @ phi.T + eta)
    g = _linalg.posterior(omega_w, pi0)
    return pi0, g, g


def _true_step(p, pi0, phi, eta, lam, work, sigma):
    """True MSE of a filter whose gain was built from ``pi0`` and ``work``.

    Evaluates the five-term expression literally, with the n x n inverse of
    ``Lambda Pi0 Lambda' + W`` applied through a Cholesky factorization.
    """
    pi = _linalg.symmetrize(phi @ p @ phi.T + eta)
    s = lam @ pi0 @ lam.T + work
    # kt = (Lambda Pi0 Lambda' + W)^{-1} Lambda Pi0, so K = kt'
    kt = _linalg.spd_solve(s, lam @ pi0, "Lambda Pi0 Lambda' + W")
    middle = lam @ pi @ lam.T + sigma
    p_new = (pi + kt.T @ middle @ kt
             - kt.T @ lam @ pi
             - pi @ lam.T @ kt)
    return pi, _linalg.symmetrize(p_new), kt.T


def _fro(a):
    return float(np.linalg.norm(a, "fro"))


def mse_kf_riccati(params, assumed, horizon=DEFAULT_HORIZON, tol=DEFAULT_TOL, p0=None):
    """Transient and steady-state Kalman MSEs under ``assumed``.

    Both recursions start from ``P_0 = P0_0 = I`` (or ``p0``) and stop at the
    first ``t`` with every successive Frobenius difference below ``tol``.

    Raises
    ------
    NoConvergence
        If the tolerance is not met within ``horizon`` steps.
    NonPsdPropagation
        If an iterate stops being positive semidefinite.
    """
    wc = working_cov(params, assumed)
    method = Method.of("KF", wc.spec.mode)
    r = params.r
    phi = params.factor_ar
    eta = params.state_noise_cov
    start = np.eye(r) if p0 is None else _linalg.symmetrize(np.asarray(p0, dtype=float))
    if not _linalg.is_psd(start):
        raise NonPsdPropagation("initial MSE is not positive semidefinite")
    misspecified = wc.spec.mode is not CovMode.FULL
    if misspecified:
        lam = params.loadings
        work = wc.dense(params)
        sigma = np.asarray(params.idio_cov)

    believed_series, true_series, residuals = [], [], []
    p_believed = start
    p_true = start
    last = None
    for t in range(1, horizon + 1):
        pi0, p_believed_new, g = _believed_step(p_believed, phi, eta, wc.omega)
        if misspecified:
            pi, p_true_new, gain = _true_step(p_true, pi0, phi, eta, lam, work, sigma)
        else:
            pi, p_true_new = pi0, p_believed_new
        for mat in (p_believed_new, p_true_new):
            if not _linalg.is_psd(mat):
                raise NonPsdPropagation(f"MSE recursion lost PSD at t={t}")
        delta = max(_fro(p_believed_new - p_believed), _fro(p_true_new - p_true))
        if t > 1:
            residuals.append(delta)
        believed_series.append(p_believed_new)
        true_series.append(p_true_new)
        p_believed, p_true = p_believed_new, p_true_new
        if t > 1 and delta < tol:
            last = t - 1
            break
    else:
        raise NoConvergence(horizon, residuals[-1] if residuals else float("nan"))

    residual = residuals[-1]
    pi_bar0 = _linalg.symmetrize(phi @ p_believed @ phi.T + eta)
    _, _, g_bar = _believed_step(p_believed, phi, eta, wc.omega)
    k_bar = g_bar @ wc.weighted_loadings.T
    believed_ss = SteadyStateSolve(p_believed, pi_bar0, k_bar, last, residual)
    pi_bar = _linalg.symmetrize(phi @ p_true @ phi.T + eta)
    true_ss = SteadyStateSolve(p_true, pi_bar, k_bar, last, residual)
    debug = {"Omega": wc.omega, "D": pi_bar0, "residuals": np.array(residuals)}
    return MseReport(
        method,
        p_true,
        p_believed,
        time_series=np.array(true_series),
        believed_series=np.array(believed_series),
        steady_state=true_ss,
        believed_steady_state=believed_ss,
        debug=debug,
    )


def theoretical_mse(params, method, spherical_variance=None, **kf_options):
    """MSE report for a method tag."""
    method = Method.parse(method)
    spec = CovarianceSpec(method.mode,
                          spherical_variance if method.mode is CovMode.SPHERICAL else None)
    if method.family == "LS":
        return mse_ls(params, spec)
    if method.family == "LP":
        return mse_lp(params, spec)
    return mse_kf_riccati(params, spec, **kf_options)


def asymptotic_variance(report, n):
    """``n * true_mse``, the finite-N estimate of the asymptotic covariance."""
    return n * np.asarray(report.true_mse)


def equivalence_gap(params, spherical_variance=None):
    """Scaled distances between asymptotically equivalent extractors.

    Returns ``n * ||MSE_a - MSE_b||_F`` for the pairs (dLP, WLS),
    (sLP, OLS), (fLP, GLS) and (fKF, GLS) (key ``gap_kf_ls``).
    """
    n = params.n

    def mse(m):
        return theoretical_mse(params, m, spherical_variance).true_mse

    def gap(a, b):
        return n * _fro(mse(a) - mse(b))

    return {
        "gap_dlp_wls": gap(Method.DLP, Method.WLS),
        "gap_slp_ols": gap(Method.SLP, Method.OLS),
        "gap_flp_gls": gap(Method.FLP, Method.GLS),
        "gap_kf_ls": gap(Method.FKF, Method.GLS),
    }
