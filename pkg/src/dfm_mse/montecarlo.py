"""Seeded Monte Carlo: empirical vs theoretical MSEs, band coverage, N-scaling.

Loadings and the idiosyncratic covariance are drawn once per experiment;
factors and noise are redrawn in every replication from the child stream
``(seed, (2, b))``, so replication ``b`` sees the same numbers whatever the
thread count or execution order.  Per-replication statistics land in
preallocated slots indexed by ``b`` and are reduced in index order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import rng as rngmod
from . import _linalg
from .estimators import TABLE_ORDER, Method, _filter_means, extract, gain_schedule, working_cov
from .model import CovarianceSpec, CovMode, scenario_parameters, simulate, simulate_noise
from .mse_engine import theoretical_mse

__all__ = [
    "KF_BURN_IN",
    "ExperimentResult",
    "BandSeries",
    "ScalingTable",
    "GAP_PAIRS",
    "MODE_PAIRS",
    "run_experiment",
    "coverage_check",
    "band_series",
    "scaling_study",
    "fixed_factor_bias",
    "loglog_slope",
    "theoretical_table",
]

# periods dropped from the KF empirical average before comparing with the
# steady state
KF_BURN_IN = 20

GAP_PAIRS = (
    (Method.DLP, Method.WLS),
    (Method.SLP, Method.OLS),
    (Method.FLP, Method.GLS),
    (Method.DKF, Method.WLS),
    (Method.SKF, Method.OLS),
)

# same family, mis-specified vs correct working covariance
MODE_PAIRS = (
    (Method.WLS, Method.GLS),
    (Method.OLS, Method.GLS),
    (Method.DLP, Method.FLP),
    (Method.SLP, Method.FLP),
    (Method.DKF, Method.FKF),
    (Method.SKF, Method.FKF),
)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """One scenario: theoretical (A) and empirical (E) MSEs per method.

    ``empirical`` averages squared errors over periods and replications;
    ``mc_std_error`` is the standard error of the scalar ``trace(E) / r``
    across replications; ``coverage`` is the fraction of (t, b, factor)
    triples inside the band built from the chosen MSE.
    """

    scenario: object
    theoretical: dict
    empirical: dict
    mc_std_error: dict
    coverage: dict
    reports: dict = field(default_factory=dict, repr=False)
    replication_mse: dict = field(default_factory=dict, repr=False)

    @property
    def methods(self):
        return tuple(self.theoretical)

    def scalar(self, method, kind="A"):
        """``trace / r`` of the A or E matrix."""
        method = Method.parse(method)
        mat = self.theoretical[method] if kind == "A" else self.empirical[method]
        return float(np.trace(mat)) / mat.shape[0]

    def z_score(self, method):
        """``(E - A) / se`` on the scalar summaries."""
        method = Method.parse(method)
        se = self.mc_std_error[method]
        return (self.scalar(method, "E") - self.scalar(method, "A")) / se


@dataclass(frozen=True, eq=False)
class BandSeries:
    """Columnar confidence-band data for one factor over a window of periods."""

    method: Method
    t_index: np.ndarray
    truth: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if not (np.all(self.lower <= self.estimate) and np.all(self.estimate <= self.upper)):
            raise ValueError("band does not bracket its estimate")

    @property
    def half_width(self):
        return 0.5 * (self.upper - self.lower)

    def rows(self):
        return zip(self.t_index.tolist(), self.truth.tolist(), self.estimate.tolist(),
                   self.lower.tolist(), self.upper.tolist())


@dataclass(frozen=True, eq=False)
class ScalingTable:
    """``n * MSE`` per method and scaled gaps per pair along an N grid.

    ``gaps`` covers the asymptotically equivalent pairs of
    :data:`GAP_PAIRS`; ``mode_gaps`` the mis-specification pairs of
    :data:`MODE_PAIRS`, which vanish when the truth is spherical.
    """

    n_grid: tuple
    scaled_mse: dict
    gaps: dict
    mode_gaps: dict
    mse_slopes: dict
    gap_slopes: dict


def _spec(method, spherical_variance):
    return CovarianceSpec(method.mode,
                          spherical_variance if method.mode is CovMode.SPHERICAL else None)


class _Extractor:
    """Method-specific linear map ``Y -> f`` with everything data-free precomputed."""

    def __init__(self, method, params, spherical_variance, t_len, report, mse_kind):
        self.method = method
        spec = _spec(method, spherical_variance)
        wc = working_cov(params, spec)
        r = params.r
        if method.family == "KF":
            self.schedule = gain_schedule(params, spec, t_len)
            self.weighted_t = wc.weighted_loadings.T
            self.matrix = None
        elif method.family == "LS":
            if wc.spec.mode is CovMode.SPHERICAL:
                lam = params.loadings
                self.matrix = _linalg.normal_solve(lam.T @ lam, lam.T)
            else:
                self.matrix = _linalg.normal_solve(wc.omega, wc.weighted_loadings.T)
        else:
            self.matrix = _linalg.normal_solve(wc.omega + np.eye(r), wc.weighted_loadings.T)
        getter = report.mse_at if mse_kind == "true" else report.believed_at
        # per-period standard deviations of each factor's error
        self.sd = np.sqrt(np.array([np.diag(getter(t)) for t in range(1, t_len + 1)])).T

    def apply(self, y):
        if self.matrix is not None:
            return self.matrix @ y
        return _filter_means(self.weighted_t @ y, self.schedule, None)


def _replication(params, config, extractors, b, z, kf_burn_in):
    panel, path = simulate(params, config.t_len, rngmod.replication_stream(config.seed, b))
    out = []
    for ex in extractors:
        err = ex.apply(panel.observations) - path.factors
        start = kf_burn_in if ex.method.family == "KF" else 0
        kept = err[:, start:]
        mse = kept @ kept.T / kept.shape[1]
        hits = int(np.count_nonzero(np.abs(err) <= z * ex.sd))
        out.append((mse, hits))
    return out


def run_experiment(config, methods=None, spherical_variance=None, kf_burn_in=KF_BURN_IN,
                   threads=1, level=0.95, mse_kind="true", params=None):
    """Replicate one scenario ``config.replications`` times.

    Parameters
    ----------
    config : ScenarioConfig
    methods : iterable of method tags, optional
        Defaults to all nine in table order.
    spherical_variance : float, optional
        Working variance of the spherical methods; mean idiosyncratic
        variance if omitted.
    kf_burn_in : int
        Leading periods excluded from the Kalman empirical MSE.
    threads : int
        Worker threads; results do not depend on it.
    level : float
        Nominal band coverage.
    mse_kind : {"true", "believed"}
        Which MSE sizes the bands.
    params : DfmParameters, optional
        Use these instead of drawing from the config seed.

    Returns
    -------
    ExperimentResult
    """
    methods = TABLE_ORDER if methods is None else tuple(Method.parse(m) for m in methods)
    if not methods:
        raise ValueError("no methods requested")
    if mse_kind not in ("true", "believed"):
        raise ValueError("mse_kind must be 'true' or 'believed'")
    if any(m.family == "KF" for m in methods) and not 0 <= kf_burn_in < config.t_len:
        raise ValueError("kf_burn_in must be smaller than t_len")
    if threads < 1:
        raise ValueError("threads must be positive")
    try:
        if params is None:
            params = scenario_parameters(config)
        reports = {m: theoretical_mse(params, m, spherical_variance) for m in methods}
        extractors = [_Extractor(m, params, spherical_variance, config.t_len, reports[m], mse_kind)
                      for m in methods]
    except Exception as exc:
        exc.scenario = config
        raise

    z = float(norm.ppf(0.5 + level / 2.0))
    n_rep = config.replications
    r = params.r
    mse = np.empty((len(methods), n_rep, r, r))
    hits = np.empty((len(methods), n_rep), dtype=np.int64)

    def work(indices):
        for b in indices:
            for k, (m, h) in enumerate(_replication(params, config, extractors, b, z, kf_burn_in)):
                mse[k, b] = m
                hits[k, b] = h

    if threads == 1:
        work(range(n_rep))
    else:
        chunks = np.array_split(np.arange(n_rep), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for fut in [pool.submit(work, c.tolist()) for c in chunks]:
                fut.result()

    draws = n_rep * config.t_len * r
    empirical, se, coverage, per_rep = {}, {}, {}, {}
    for k, m in enumerate(methods):
        empirical[m] = _linalg.symmetrize(mse[k].mean(axis=0))
        scalar = np.trace(mse[k], axis1=1, axis2=2) / r
        per_rep[m] = scalar
        se[m] = float(scalar.std(ddof=1) / np.sqrt(n_rep)) if n_rep > 1 else float("nan")
        coverage[m] = int(hits[k].sum()) / draws
    theoretical = {m: reports[m].true_mse for m in methods}
    return ExperimentResult(config, theoretical, empirical, se, coverage, reports, per_rep)


def coverage_check(config, method, level=0.95, mse_kind="true", spherical_variance=None,
                   threads=1):
    """Fraction of (t, b) with ``F_t`` inside ``f_t +/- z sqrt(MSE_t)``."""
    res = run_experiment(config, [method], spherical_variance, level=level,
                         mse_kind=mse_kind, threads=threads)
    return res.coverage[Method.parse(method)]


def band_series(config, method, window=None, level=0.95, mse_kind="true",
                spherical_variance=None, factor=0):
    """Bands along a single simulated path drawn from the ``(3,)`` stream.

    ``window`` is an inclusive ``(first, last)`` pair of 1-based periods;
    the whole sample by default.
    """
    method = Method.parse(method)
    params = scenario_parameters(config)
    first, last = (1, config.t_len) if window is None else window
    if not 1 <= first <= last <= config.t_len:
        raise ValueError(f"window {window} outside 1..{config.t_len}")
    report = theoretical_mse(params, method, spherical_variance)
    ex = _Extractor(method, params, spherical_variance, config.t_len, report, mse_kind)
    panel, path = simulate(params, config.t_len, rngmod.stream(config.seed, rngmod.BAND_PATH))
    est = ex.apply(panel.observations)
    z = float(norm.ppf(0.5 + level / 2.0))
    sl = slice(first - 1, last)
    half = z * ex.sd[factor, sl]
    centre = est[factor, sl]
    return BandSeries(method, np.arange(first, last + 1), path.factors[factor, sl].copy(),
                      centre, centre - half, centre + half)


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` on ``log x``; NaN if any ``y`` is 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def scaling_study(recipe, n_grid, methods=None, spherical_variance=None):
    """``n * MSE`` and scaled pairwise gaps along ``n_grid``.

    Every N reuses the recipe's seed.  Uniform draws are consumed in order,
    so the first N loadings and variances at a larger N repeat those at a
    smaller one and the grid traces a single growing cross-section.
    """
    grid = tuple(int(n) for n in n_grid)
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_grid must be strictly increasing with at least two points")
    methods = TABLE_ORDER if methods is None else tuple(Method.parse(m) for m in methods)
    pairs = GAP_PAIRS + MODE_PAIRS
    needed = set(methods) | {m for pair in pairs for m in pair}
    scaled = {m: [] for m in methods}
    gaps = {pair: [] for pair in pairs}
    for n in grid:
        params = scenario_parameters(recipe.with_(n=n))
        mse = {m: theoretical_mse(params, m, spherical_variance).true_mse for m in needed}
        for m in methods:
            scaled[m].append(n * float(np.trace(mse[m])) / params.r)
        for a, b in pairs:
            gaps[(a, b)].append(n * float(np.linalg.norm(mse[a] - mse[b], "fro")))
    scaled = {m: np.array(v) for m, v in scaled.items()}
    gaps = {p: np.array(v) for p, v in gaps.items()}
    return ScalingTable(
        grid,
        scaled,
        {p: gaps[p] for p in GAP_PAIRS},
        {p: gaps[p] for p in MODE_PAIRS},
        {m: loglog_slope(grid, v) for m, v in scaled.items()},
        {p: loglog_slope(grid, gaps[p]) for p in GAP_PAIRS},
    )


def fixed_factor_bias(params, factors, methods, replications, seed):
    """Mean estimate and its standard error with the factor path held fixed.

    Only the idiosyncratic noise is redrawn, from streams ``(4, b)``.

    Returns
    -------
    dict
        method -> (mean, std_error), each ``(r, T)``.
    """
    factors = np.asarray(factors, dtype=float)
    methods = tuple(Method.parse(m) for m in methods)
    signal = params.loadings @ factors
    sums = {m: np.zeros_like(factors) for m in methods}
    squares = {m: np.zeros_like(factors) for m in methods}
    for b in range(replications):
        y = signal + simulate_noise(params, factors.shape[1],
                                    rngmod.stream(seed, (rngmod.FIXED_FACTOR, b)))
        for m in methods:
            f = extract(m, y, params).values
            sums[m] += f
            squares[m] += f * f
    out = {}
    for m in methods:
        mean = sums[m] / replications
        var = (squares[m] - replications * mean * mean) / (replications - 1)
        out[m] = (mean, np.sqrt(np.maximum(var, 0.0) / replications))
    return out


def theoretical_table(config, methods=None, spherical_variance=None):
    """Theoretical MSE reports only, no simulation."""
    methods = TABLE_ORDER if methods is None else tuple(Method.parse(m) for m in methods)
    params = scenario_parameters(config)
    return {m: theoretical_mse(params, m, spherical_variance) for m in methods}

