"""Approximate dynamic factor model with VAR(1) factors.

The observation equation is ``Y_t = Lambda F_t + eps_t`` with
``eps_t ~ N(0, Sigma_eps)`` i.i.d. over time, and the factors follow
``F_t = Phi F_{t-1} + eta_t``.  The state noise covariance is pinned by
the unit factor covariance, ``Sigma_eta = I - Phi Phi'``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve

from . import _linalg, rng as _rng
from .exceptions import ConfigError, NonStationary, NotIdentified, NotPositiveDefinite

__all__ = [
    "CovMode",
    "CovarianceSpec",
    "DfmParameters",
    "Panel",
    "FactorPath",
    "ScenarioConfig",
    "IdentificationReport",
    "build_state_noise_cov",
    "build_idio_cov",
    "draw_loadings",
    "scenario_parameters",
    "simulate",
    "validate_identification",
]


def _frozen_array(a, ndim, what):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} has non-finite entries")
    arr.setflags(write=False)
    return arr


class CovMode(enum.Enum):
    FULL = "full"
    DIAGONAL = "diagonal"
    SPHERICAL = "spherical"


@dataclass(frozen=True)
class CovarianceSpec:
    """Idiosyncratic covariance structure an estimator assumes.

    ``spherical_variance`` is only meaningful in spherical mode.  Left as
    ``None`` it resolves to the mean idiosyncratic variance of the model the
    spec is applied to.
    """

    mode: CovMode
    spherical_variance: float | None = None

    def __post_init__(self):
        if not isinstance(self.mode, CovMode):
            object.__setattr__(self, "mode", CovMode(self.mode))
        if self.spherical_variance is not None:
            if self.mode is not CovMode.SPHERICAL:
                raise ValueError("spherical_variance is only valid in spherical mode")
            if not self.spherical_variance > 0:
                raise ValueError("spherical_variance must be positive")

    @classmethod
    def full(cls):
        return cls(CovMode.FULL)

    @classmethod
    def diagonal(cls):
        return cls(CovMode.DIAGONAL)

    @classmethod
    def spherical(cls, variance=None):
        return cls(CovMode.SPHERICAL, None if variance is None else float(variance))

    def resolve(self, params):
        """Return a copy with the spherical variance filled in from ``params``."""
        if self.mode is CovMode.SPHERICAL and self.spherical_variance is None:
            return replace(self, spherical_variance=float(np.mean(params.idio_diag)))
        return self


def build_state_noise_cov(factor_ar):
    """State noise covariance giving the VAR(1) factors unit covariance.

    Parameters
    ----------
    factor_ar : (r, r) array_like
        Autoregressive matrix ``Phi``.

    Returns
    -------
    ndarray
        ``I - Phi Phi'``, the unique ``Sigma_eta`` whose stationary
        solution of ``S = Phi S Phi' + Sigma_eta`` is ``S = I``.

    Raises
    ------
    NonStationary
        If the spectral radius of ``Phi`` is at least one, or if
        ``I - Phi Phi'`` is not positive semidefinite (no valid noise law).
    """
    phi = np.atleast_2d(np.asarray(factor_ar, dtype=float))
    if phi.shape[0] != phi.shape[1]:
        raise ValueError(f"factor_ar must be square, got {phi.shape}")
    radius = np.max(np.abs(np.linalg.eigvals(phi)))
    if radius >= 1.0:
        raise NonStationary(f"spectral radius of factor_ar is {radius:.6g} >= 1")
    sigma_eta = _linalg.symmetrize(np.eye(phi.shape[0]) - phi @ phi.T)
    if np.linalg.eigvalsh(sigma_eta)[0] < -1e-12:
        raise NonStationary("I - Phi Phi' is not positive semidefinite")
    return sigma_eta


@dataclass(frozen=True, eq=False)
class DfmParameters:
    """Known parameters of the factor model.

    Use :meth:`build` to derive ``state_noise_cov`` from ``factor_ar``.
    Arrays are copied and made read-only on construction.
    """

    loadings: np.ndarray
    idio_cov: np.ndarray
    factor_ar: np.ndarray
    state_noise_cov: np.ndarray

    def __post_init__(self):
        lam = _frozen_array(self.loadings, 2, "loadings")
        cov = _frozen_array(self.idio_cov, 2, "idio_cov")
        phi = _frozen_array(np.atleast_2d(self.factor_ar), 2, "factor_ar")
        eta = _frozen_array(np.atleast_2d(self.state_noise_cov), 2, "state_noise_cov")
        n, r = lam.shape
        if cov.shape != (n, n):
            raise ValueError(f"idio_cov must be {n}x{n}, got {cov.shape}")
        if phi.shape != (r, r) or eta.shape != (r, r):
            raise ValueError(f"factor_ar and state_noise_cov must be {r}x{r}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * np.abs(cov).max()):
            raise NotPositiveDefinite("idio_cov is not symmetric")
        if np.linalg.matrix_rank(lam) < r:
            raise ValueError("loadings do not have full column rank")
        expected = build_state_noise_cov(phi)
        if not np.allclose(eta, expected, rtol=0, atol=1e-10):
            raise NonStationary("state_noise_cov differs from I - Phi Phi'")
        for name, arr in (("loadings", lam), ("idio_cov", cov), ("factor_ar", phi),
                          ("state_noise_cov", eta)):
            object.__setattr__(self, name, arr)
        # factorize eagerly so an indefinite covariance fails at construction
        self.idio_factor

    @classmethod
    def build(cls, loadings, idio_cov, factor_ar=None, enforce_identification=False):
        lam = np.asarray(loadings, dtype=float)
        if lam.ndim == 1:
            lam = lam[:, None]
        r = lam.shape[1]
        phi = np.zeros((r, r)) if factor_ar is None else np.atleast_2d(factor_ar)
        params = cls(lam, idio_cov, phi, build_state_noise_cov(phi))
        if enforce_identification:
            report = validate_identification(params)
            if not report.identified:
                raise NotIdentified(
                    f"Lambda' Sigma^-1 Lambda off-diagonal {report.max_offdiag:.3e}, "
                    f"decreasing diagonal: {report.decreasing}"
                )
        return params

    @property
    def n(self):
        return self.loadings.shape[0]

    @property
    def r(self):
        return self.loadings.shape[1]

    @cached_property
    def idio_factor(self):
        return _linalg.cholesky(self.idio_cov, "idio_cov")

    @cached_property
    def idio_diag(self):
        d = np.diag(self.idio_cov).copy()
        d.setflags(write=False)
        return d

    @cached_property
    def precision_loadings(self):
        """``Sigma_eps^{-1} Lambda``."""
        out = cho_solve(self.idio_factor, self.loadings)
        out.setflags(write=False)
        return out

    @cached_property
    def signal_to_noise(self):
        """``Lambda' Sigma_eps^{-1} Lambda``."""
        return _linalg.symmetrize(self.loadings.T @ self.precision_loadings)

    def with_factor_ar(self, factor_ar):
        return DfmParameters.build(self.loadings, self.idio_cov, factor_ar)


@dataclass(frozen=True, eq=False)
class Panel:
    observations: np.ndarray

    def __post_init__(self):
        y = _frozen_array(self.observations, 2, "observations")
        if y.shape[1] < 1:
            raise ValueError("panel needs at least one period")
        object.__setattr__(self, "observations", y)

    @property
    def n(self):
        return self.observations.shape[0]

    @property
    def t_len(self):
        return self.observations.shape[1]


@dataclass(frozen=True, eq=False)
class FactorPath:
    factors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "factors", _frozen_array(self.factors, 2, "factors"))

    @property
    def t_len(self):
        return self.factors.shape[1]


_HETERO_MODES = ("unit", "uniform")


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the simulation grid (single factor).

    ``hetero_mode="unit"`` sets every ``v_i = 1``; ``"uniform"`` draws
    ``v_i ~ U(hetero_low, hetero_high)``.  Idiosyncratic variances are
    ``sigma2_star * v_i`` and correlations ``tau ** |i - j|``.
    """

    phi: float
    hetero_mode: str
    tau: float
    sigma2_star: float
    n: int
    t_len: int
    replications: int
    seed: int
    permute_idio: bool = False
    hetero_low: float = 0.5
    hetero_high: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.phi < 1.0:
            raise ConfigError("phi must lie in [0, 1)", field="phi")
        if self.hetero_mode not in _HETERO_MODES:
            raise ConfigError(f"hetero_mode must be one of {_HETERO_MODES}", field="hetero_mode")
        if not 0.0 < self.hetero_low <= self.hetero_high:
            raise ConfigError("need 0 < hetero_low <= hetero_high", field="hetero_low")
        if not 0.0 <= self.tau < 1.0:
            raise ConfigError("tau must lie in [0, 1)", field="tau")
        if not self.sigma2_star > 0:
            raise ConfigError("sigma2_star must be positive", field="sigma2_star")
        for name in ("n", "t_len", "replications"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer", field=name)
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) \
                or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="seed")

    def with_(self, **changes):
        return replace(self, **changes)


def build_idio_cov(config, rng):
    """Toeplitz-correlated, optionally heteroscedastic idiosyncratic covariance.

    Draws ``v`` first (uniform mode only) and then, if requested, a
    permutation applied to rows and columns alike.
    """
    n = config.n
    if config.hetero_mode == "uniform":
        v = rng.uniform(config.hetero_low, config.hetero_high, size=n)
    else:
        v = np.ones(n)
    sd = np.sqrt(config.sigma2_star * v)
    lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    corr = np.power(config.tau, lag) if config.tau > 0 else np.eye(n)
    cov = corr * np.outer(sd, sd)
    np.fill_diagonal(cov, config.sigma2_star * v)
    if config.permute_idio:
        perm = rng.permutation(n)
        cov = cov[np.ix_(perm, perm)]
    cov = _linalg.symmetrize(cov)
    _linalg.cholesky(cov, "idiosyncratic covariance")
    return cov


def draw_loadings(config, rng, r=1):
    """I.i.d. ``U(0, 1)`` loadings, shape ``(n, r)``."""
    return rng.uniform(0.0, 1.0, size=(config.n, r))


def scenario_parameters(config, r=1):
    """Draw loadings and idiosyncratic covariance for ``config`` from its seed."""
    lam = draw_loadings(config, _rng.stream(config.seed, _rng.LOADINGS), r=r)
    cov = build_idio_cov(config, _rng.stream(config.seed, _rng.IDIOSYNCRATIC))
    return DfmParameters.build(lam, cov, config.phi * np.eye(r))


def _psd_sqrt(a):
    w, v = np.linalg.eigh(_linalg.symmetrize(a))
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_factors(params, t_len, rng):
    """Stationary factor path: ``F_0 ~ N(0, I)`` then the VAR(1) recursion."""
    r = params.r
    f_prev = rng.standard_normal(r)
    shocks = rng.standard_normal((t_len, r)) @ _psd_sqrt(params.state_noise_cov).T
    factors = np.empty((r, t_len))
    phi = params.factor_ar
    for t in range(t_len):
        f_prev = phi @ f_prev + shocks[t]
        factors[:, t] = f_prev
    return factors


def simulate_noise(params, t_len, rng):
    chol = np.tril(params.idio_factor[0])
    return chol @ rng.standard_normal((params.n, t_len))


def simulate(params, t_len, rng):
    """Simulate ``(Panel, FactorPath)`` of length ``t_len``.

    Draw order within ``rng``: ``F_0``, the ``t_len`` state shocks, then the
    ``n x t_len`` idiosyncratic innovations.
    """
    factors = simulate_factors(params, t_len, rng)
    noise = simulate_noise(params, t_len, rng)
    return Panel(params.loadings @ factors + noise), FactorPath(factors)


@dataclass(frozen=True)
class IdentificationReport:
    max_offdiag: float
    decreasing: bool
    diagonal: np.ndarray = field(repr=False)
    tol: float = 1e-10

    @property
    def identified(self):
        scale = max(float(np.max(np.abs(self.diagonal))), np.finfo(float).tiny)
        return self.max_offdiag <= self.tol * scale and self.decreasing


def validate_identification(params, tol=1e-10):
    """Check that ``Lambda' Sigma^-1 Lambda`` is diagonal and strictly decreasing."""
    omega = params.signal_to_noise
    diag = np.diag(omega).copy()
    off = omega - np.diag(diag)
    max_off = float(np.max(np.abs(off))) if params.r > 1 else 0.0
    decreasing = bool(np.all(np.diff(diag) < 0))
    return IdentificationReport(max_off, decreasing, diag, tol)
