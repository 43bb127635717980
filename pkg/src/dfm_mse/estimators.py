"""Factor extraction: least squares, static linear projection, Kalman filter.

Each family is run under an assumed idiosyncratic covariance ``W`` (full,
diagonal or spherical) that may differ from the true one.  Production paths
only invert r x r matrices; ``W^{-1} Lambda`` is the only n-dimensional
quantity ever formed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _linalg
from .exceptions import NonPsdPropagation
from .model import CovarianceSpec, CovMode, Panel

__all__ = [
    "Method",
    "TABLE_ORDER",
    "FactorEstimate",
    "KalmanState",
    "GainSchedule",
    "WorkingCov",
    "working_cov",
    "extract_ls",
    "extract_lp",
    "gain_schedule",
    "kalman_filter",
    "extract",
]


class Method(enum.Enum):
    GLS = "GLS"
    WLS = "WLS"
    OLS = "OLS"
    FLP = "fLP"
    DLP = "dLP"
    SLP = "sLP"
    FKF = "fKF"
    DKF = "dKF"
    SKF = "sKF"

    @property
    def family(self):
        if self in (Method.GLS, Method.WLS, Method.OLS):
            return "LS"
        return self.value[1:]

    @property
    def mode(self):
        return _METHOD_MODE[self]

    @classmethod
    def of(cls, family, mode):
        for m in cls:
            if m.family == family and m.mode is mode:
                return m
        raise ValueError(f"no method for ({family}, {mode})")

    @classmethod
    def parse(cls, name):
        """Accept ``"fLP"``, ``"FLP"``, ``Method.FLP`` alike."""
        if isinstance(name, cls):
            return name
        for m in cls:
            if m.value.lower() == str(name).lower():
                return m
        raise ValueError(f"unknown method {name!r}")


_METHOD_MODE = {
    Method.GLS: CovMode.FULL, Method.FLP: CovMode.FULL, Method.FKF: CovMode.FULL,
    Method.WLS: CovMode.DIAGONAL, Method.DLP: CovMode.DIAGONAL, Method.DKF: CovMode.DIAGONAL,
    Method.OLS: CovMode.SPHERICAL, Method.SLP: CovMode.SPHERICAL, Method.SKF: CovMode.SPHERICAL,
}

# column order of the MSE tables
TABLE_ORDER = (
    Method.OLS, Method.WLS, Method.GLS,
    Method.SLP, Method.DLP, Method.FLP,
    Method.SKF, Method.DKF, Method.FKF,
)


@dataclass(frozen=True, eq=False)
class FactorEstimate:
    method: Method
    values: np.ndarray
    assumed_cov: CovarianceSpec

    def __post_init__(self):
        if self.method.mode is not self.assumed_cov.mode:
            raise ValueError(f"{self.method.value} requires {self.method.mode.value} covariance")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("factor estimates are not finite")


@dataclass(frozen=True, eq=False)
class KalmanState:
    filtered_mean: np.ndarray
    one_step_mse: np.ndarray
    filtered_mse: np.ndarray
    gain: np.ndarray


@dataclass(frozen=True, eq=False)
class WorkingCov:
    """An assumed covariance reduced to what the extractors need.

    Attributes
    ----------
    spec : CovarianceSpec
        Resolved spec (spherical variance filled in).
    weighted_loadings : (n, r) ndarray
        ``W^{-1} Lambda``.
    omega : (r, r) ndarray
        ``Lambda' W^{-1} Lambda``.
    """

    spec: CovarianceSpec
    weighted_loadings: np.ndarray
    omega: np.ndarray

    def dense(self, params):
        """The n x n assumed covariance itself (test oracles only)."""
        mode = self.spec.mode
        if mode is CovMode.FULL:
            return np.array(params.idio_cov)
        if mode is CovMode.DIAGONAL:
            return np.diag(params.idio_diag)
        return self.spec.spherical_variance * np.eye(params.n)


def working_cov(params, assumed):
    spec = assumed.resolve(params)
    lam = params.loadings
    if spec.mode is CovMode.FULL:
        wl = np.asarray(params.precision_loadings)
    elif spec.mode is CovMode.DIAGONAL:
        wl = lam / params.idio_diag[:, None]
    else:
        wl = lam / spec.spherical_variance
    return WorkingCov(spec, wl, _linalg.symmetrize(lam.T @ wl))


def _check_panel(panel, params):
    y = panel.observations if isinstance(panel, Panel) else np.asarray(panel, dtype=float)
    if y.ndim != 2 or y.shape[0] != params.n:
        raise ValueError(f"panel has shape {y.shape}, expected ({params.n}, T)")
    return y


def extract_ls(panel, params, assumed):
    """Least-squares factors ``(Lambda' W Lambda)^{-1} Lambda' W Y_t``.

    In spherical mode the variance cancels, so the plain OLS normal
    equations are solved and the result does not depend on it.
    """
    y = _check_panel(panel, params)
    wc = working_cov(params, assumed)
    if wc.spec.mode is CovMode.SPHERICAL:
        lam = params.loadings
        values = _linalg.normal_solve(lam.T @ lam, lam.T @ y)
    else:
        values = _linalg.normal_solve(wc.omega, wc.weighted_loadings.T @ y)
    return FactorEstimate(Method.of("LS", wc.spec.mode), values, wc.spec)


def extract_lp(panel, params, assumed):
    """Static linear projection ``(Lambda' W Lambda + I)^{-1} Lambda' W Y_t``."""
    y = _check_panel(panel, params)
    wc = working_cov(params, assumed)
    values = _linalg.normal_solve(wc.omega + np.eye(params.r), wc.weighted_loadings.T @ y)
    return FactorEstimate(Method.of("LP", wc.spec.mode), values, wc.spec)


@dataclass(frozen=True, eq=False)
class GainSchedule:
    """Data-independent part of a Kalman pass.

    ``update[t] = (Lambda' W Lambda + P_{t|t-1}^{-1})^{-1}``; the gain is
    ``update[t] @ weighted_loadings.T``.  ``one_step`` and ``filtered`` are
    the filter's own (believed) MSE sequences.
    """

    working: WorkingCov
    factor_ar: np.ndarray
    one_step: np.ndarray
    filtered: np.ndarray
    update: np.ndarray

    @property
    def t_len(self):
        return self.update.shape[0]

    def gain(self, t):
        return self.update[t] @ self.working.weighted_loadings.T


def gain_schedule(params, assumed, t_len, p0=None):
    """Run the MSE half of the filter for ``t_len`` steps from ``P_0``."""
    wc = working_cov(params, assumed)
    r = params.r
    phi = params.factor_ar
    eta = params.state_noise_cov
    p = np.eye(r) if p0 is None else _linalg.symmetrize(np.asarray(p0, dtype=float))
    if not _linalg.is_psd(p):
        raise NonPsdPropagation("initial MSE is not positive semidefinite")
    one_step = np.empty((t_len, r, r))
    filtered = np.empty((t_len, r, r))
    update = np.empty((t_len, r, r))
    for t in range(t_len):
        pi = _linalg.symmetrize(phi @ p @ phi.T + eta)
        # (I - K_t Lambda) P_{t|t-1} is the posterior itself
        g = _linalg.posterior(wc.omega, pi)
        p = g
        if not _linalg.is_psd(p):
            raise NonPsdPropagation(f"filtered MSE lost PSD at t={t + 1}")
        one_step[t], filtered[t], update[t] = pi, p, g
    return GainSchedule(wc, phi, one_step, filtered, update)


def _filter_means(x, schedule, f0):
    """Mean recursion on ``x_t = Lambda' W^{-1} Y_t``; extra trailing axes batch."""
    phi = schedule.factor_ar
    omega = schedule.working.omega
    f = np.zeros(x.shape[:1] + x.shape[2:]) if f0 is None else np.asarray(f0, dtype=float)
    out = np.empty_like(x)
    for t in range(x.shape[1]):
        pred = phi @ f
        f = pred + schedule.update[t] @ (x[:, t] - omega @ pred)
        out[:, t] = f
    return out


def kalman_filter(panel, params, assumed, p0=None, f0=None, schedule=None):
    """Kalman filter run with the assumed covariance in place of the truth.

    The prior is ``f_0 = 0`` and ``P_0 = I`` unless given.  The gain uses
    the r x r form ``(Lambda' W Lambda + P_{t|t-1}^{-1})^{-1} Lambda' W``.

    Parameters
    ----------
    schedule : GainSchedule, optional
        Precomputed :func:`gain_schedule` for the same parameters and
        assumed covariance, at least ``T`` steps long.  Saves the MSE
        recursion when filtering many panels.

    Returns
    -------
    estimate : FactorEstimate
    states : list of KalmanState
        ``filtered_mse`` is the MSE the filter believes, which is the true
        one only when the assumed covariance is correct.
    """
    y = _check_panel(panel, params)
    t_len = y.shape[1]
    if schedule is None:
        schedule = gain_schedule(params, assumed, t_len, p0)
    elif schedule.t_len < t_len:
        raise ValueError("gain schedule is shorter than the panel")
    wc = schedule.working
    values = _filter_means(wc.weighted_loadings.T @ y, schedule, f0)
    states = [
        KalmanState(values[:, t], schedule.one_step[t], schedule.filtered[t], schedule.gain(t))
        for t in range(t_len)
    ]
    return FactorEstimate(Method.of("KF", wc.spec.mode), values, wc.spec), states


def extract(method, panel, params, spherical_variance=None, schedule=None):
    """Run one of the nine extractors by tag."""
    method = Method.parse(method)
    spec = CovarianceSpec(method.mode, spherical_variance
                          if method.mode is CovMode.SPHERICAL else None)
    if method.family == "LS":
        return extract_ls(panel, params, spec)
    if method.family == "LP":
        return extract_lp(panel, params, spec)
    return kalman_filter(panel, params, spec, schedule=schedule)[0]
