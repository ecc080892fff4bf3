"""Derived observables: specific heat, winding plateaus, correlations,
velocity histograms, domain-wall energetics and peak finite-size scaling."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps

from . import exact, spectral
from .errors import ConfigError
from .mc import RunResult, Samples, correlation_estimates
from .model import ModelParams, make_domain_wall_pair, uniform_config
from .stats import jackknife, pooled_bins

logger = logging.getLogger(__name__)

PLATEAU_TOL = 0.1
PLATEAU_MIN_POINTS = 3
SHARPENING_MIN_RATIO = 1.25


@dataclass
class ObservableSeries:
    """An observable along one parameter axis at fixed ``L``."""

    axis_name: str
    axis: np.ndarray
    mean: np.ndarray
    err: np.ndarray
    L: int
    tag: str

    def __post_init__(self):
        self.axis = np.asarray(self.axis, float)
        self.mean = np.asarray(self.mean, float)
        self.err = np.asarray(self.err, float) if self.err is not None else np.zeros_like(self.mean)
        if not (self.axis.shape == self.mean.shape == self.err.shape):
            raise ConfigError("series arrays must have equal lengths")
        if np.any(self.err < 0):
            raise ConfigError("errors must be non-negative")

    def __len__(self) -> int:
        return self.axis.size

    def rows(self) -> list[dict]:
        return [{self.axis_name: a, "mean": m, "err": e, "L": self.L, "tag": self.tag}
                for a, m, e in zip(self.axis, self.mean, self.err)]


# -- specific heat -----------------------------------------------------------

def specific_heat(data, params: ModelParams, per_site: bool = True) -> tuple[float, float]:
    """``beta^2 [Var(E_J + E_f) - <dE_f/dbeta>]`` with a jackknife error.

    ``data`` is a :class:`RunResult`, a sequence of :class:`Samples`, or None
    for the exact class sum (``t'=0``, ring).
    """
    if data is None:
        cv = exact.exact_observables(params).specific_heat
        return (cv if per_site else cv * params.L), 0.0
    sam = [c.samples for c in data.chains] if isinstance(data, RunResult) else list(data)
    n_bins = data.manifest.n_bins if isinstance(data, RunResult) else 32
    e = pooled_bins([s.e_tot for s in sam], n_bins)
    e2 = pooled_bins([s.e_tot ** 2 for s in sam], n_bins)
    d = pooled_bins([s.de_f for s in sam], n_bins)
    norm = params.L if per_site else 1
    beta2 = params.beta ** 2
    return jackknife(lambda a, b, c: beta2 * (b - a * a - c) / norm, e, e2, d)


def energy_derivative_cv(params: ModelParams, dT: float | None = None, richardson: bool = True) -> float:
    """``-beta^2 d<E>/dbeta`` per site from centred differences in ``T``.

    The default step is ``1e-3 * min(1, T)``.  With ``richardson`` the steps
    ``dT`` and ``dT/2`` are combined to cancel the ``O(dT^2)`` error.
    """
    T = 1.0 / params.beta
    if dT is None:
        dT = 1e-3 * min(1.0, T)

    def centred(h):
        e_hi = exact.exact_observables(params.replace(beta=1.0 / (T + h))).energy
        e_lo = exact.exact_observables(params.replace(beta=1.0 / (T - h))).energy
        return (e_hi - e_lo) / (2 * h)

    if not richardson:
        return centred(dT)
    return (4 * centred(dT / 2) - centred(dT)) / 3


# -- winding -----------------------------------------------------------------

@dataclass
class Plateau:
    value: int
    start: float
    stop: float
    n_points: int
    residual: float


@dataclass
class WindingAnalysis:
    series: ObservableSeries
    nearest: np.ndarray
    residual: np.ndarray
    plateaus: list[Plateau]
    transitions: list[float]


def winding_values(result: RunResult, sectored: bool = True) -> tuple[float, float]:
    key = "winding_sector" if sectored else "winding"
    est = result.estimates.get(key)
    if est is None:
        raise ConfigError("run has no velocity measurements (full_every=0)")
    return est.mean, est.err


def winding_series(axis, results: Sequence[RunResult], sectored: bool = True,
                   axis_name: str = "T") -> ObservableSeries:
    vals = [winding_values(r, sectored) for r in results]
    L = results[0].manifest.params.L if results else 0
    return ObservableSeries(axis_name, axis, [v[0] for v in vals], [v[1] for v in vals], L,
                            "winding_sector" if sectored else "winding")


def find_plateaus(series: ObservableSeries, tol: float = PLATEAU_TOL,
                  min_points: int = PLATEAU_MIN_POINTS) -> WindingAnalysis:
    """Maximal runs of ``>= min_points`` consecutive points within ``tol`` of
    the same integer; transitions are midpoints between consecutive plateaus
    of different value."""
    order = np.argsort(series.axis, kind="stable")
    axis, w = series.axis[order], series.mean[order]
    nearest = np.rint(w).astype(int)
    resid = np.abs(w - nearest)
    ok = resid < tol
    plateaus = []
    i = 0
    while i < len(w):
        if not ok[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(w) and ok[j + 1] and nearest[j + 1] == nearest[i]:
            j += 1
        if j - i + 1 >= min_points:
            plateaus.append(Plateau(int(nearest[i]), float(axis[i]), float(axis[j]), j - i + 1,
                                    float(resid[i:j + 1].max())))
        i = j + 1
    transitions = [0.5 * (a.stop + b.start) for a, b in zip(plateaus[:-1], plateaus[1:]) if a.value != b.value]
    return WindingAnalysis(series, nearest, resid, plateaus, transitions)


def exact_winding_series(params: ModelParams, betas, sectored: bool = True) -> ObservableSeries:
    """Exact sector-folded (or unsectored) winding along a ``beta`` grid."""
    vals = []
    for b in betas:
        res = exact.exact_observables(params.replace(beta=float(b)))
        vals.append(res.winding_sector if sectored else res.winding)
    return ObservableSeries("beta", betas, vals, np.zeros(len(vals)), params.L,
                            "winding_sector" if sectored else "winding")


# -- correlations ------------------------------------------------------------

@dataclass
class Correlations:
    r: np.ndarray
    corr_x: np.ndarray
    corr_x_err: np.ndarray
    corr_v: np.ndarray
    corr_v_err: np.ndarray


def correlations(result: RunResult) -> Correlations:
    """``C_X(r)`` and the connected ``C_v(r)`` of the imaginary bond current."""
    est = correlation_estimates(result)
    if not est:
        raise ConfigError("run has no correlation measurements (full_every=0)")
    return Correlations(est["r"], est["corr_x"], est["corr_x_err"], est["corr_v"], est["corr_v_err"])


# -- velocity histogram ------------------------------------------------------

@dataclass
class VHistogram:
    density: np.ndarray
    edges_re: np.ndarray
    edges_im: np.ndarray
    symmetry_score: float
    n_samples: int


def histogram_v(v, bins: int = 15, extent: float | None = None, weights=None) -> VHistogram:
    """Normalized 2D histogram over ``(Re v, Im v)`` on a grid symmetric about 0.

    ``bins`` is rounded up to an odd number so that ``v = 0`` is a bin centre
    and rounding noise around zero does not straddle a bin edge.  The symmetry
    score is the L1 distance between the histogram and its ``v -> -v`` mirror (0 for a perfectly symmetric sample, at most 2).
    """
    bins = int(bins) | 1
    v = np.asarray(v, complex).ravel()
    keep = np.isfinite(v)
    v = v[keep]
    if weights is not None:
        weights = np.asarray(weights, float).ravel()[keep]
    if v.size == 0:
        edges = np.linspace(-1, 1, bins + 1)
        return VHistogram(np.zeros((bins, bins)), edges, edges, 0.0, 0)
    if extent is None:
        extent = float(max(np.max(np.abs(v.real)), np.max(np.abs(v.imag)), 1e-12)) * (1 + 1e-9)
    edges = np.linspace(-extent, extent, bins + 1)
    H, _, _ = np.histogram2d(v.real, v.imag, bins=[edges, edges], weights=weights)
    total = H.sum()
    P = H / total if total > 0 else H
    score = float(np.abs(P - P[::-1, ::-1]).sum())
    return VHistogram(P, edges, edges, score, int(v.size))


def velocity_samples(result: RunResult) -> np.ndarray:
    return np.concatenate([c.samples.v for c in result.chains])


# -- domain walls ------------------------------------------------------------

class ScanMode(str, enum.Enum):
    FIXED_L = "fixed_L_vary_r"
    FIXED_R = "fixed_r_vary_L"
    FIXED_ALPHA = "fixed_alpha_vary_L"

    @classmethod
    def parse(cls, text: str) -> "ScanMode":
        aliases = {"fixed_L": cls.FIXED_L, "fixed_r": cls.FIXED_R, "fixed_alpha": cls.FIXED_ALPHA}
        if text in aliases:
            return aliases[text]
        return cls(text)


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r2: float
    slope_err: float = float("nan")


@dataclass
class DomainWallScan:
    mode: ScanMode
    points: np.ndarray  # rows (r or L, dE)
    fit: LinearFit | None = None
    saturation: float = float("nan")
    method: str = ""
    params: dict = field(default_factory=dict)


def ground_state_energy(params: ModelParams, n_minus_or_config) -> float:
    """Many-body ground-state energy of a configuration.

    An integer argument means a contiguous arc of that many ``-1`` bonds; on a
    ring at ``t'=0`` only its count matters and the reduced spectrum is used.
    """
    if isinstance(n_minus_or_config, (int, np.integer)):
        n = int(n_minus_or_config)
        if params.pbc and params.t_prime == 0.0:
            spec = exact.hn_spectrum(params.L, n, params).spectral_data(params.is_real)
            return spectral.ground_state_energy(spec)
        config = uniform_config(params.L) if n == 0 else make_domain_wall_pair(params.L, n)
    else:
        config = n_minus_or_config
    return spectral.ground_state_energy(spectral.config_spectrum(params, config))


def domain_wall_energy(params: ModelParams, r: int) -> float:
    """``E0(arc of r bonds) - E0(uniform)``.

    On a ring the arc of ``L - r`` is the global flip of a translated arc of
    ``r``; the smaller of the two is evaluated so that ``r -> L - r`` is exact.
    """
    L = params.L
    if not 1 <= r <= L - 1:
        raise ConfigError(f"need 1 <= r <= L-1, got {r}")
    if params.pbc:
        r = min(r, L - r)
    return ground_state_energy(params, r) - ground_state_energy(params, 0)


def linear_fit(x, y) -> LinearFit:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2:
        return LinearFit(float("nan"), float("nan"), float("nan"))
    res = sps.linregress(x, y)
    return LinearFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), float(res.stderr))


def domain_wall_scan(params: ModelParams, mode: ScanMode | str = ScanMode.FIXED_L, *,
                     r_values=None, L_values=None, r: int = 4, alpha: float = 0.25,
                     fit_range: tuple[float, float] | None = None) -> DomainWallScan:
    """Ground-state cost of two domain walls.

    ``fixed_L_vary_r``: ``dE(r)`` at ``L = params.L``, linear fit over
    ``r in [L/8, L/2]`` unless ``fit_range`` is given.
    ``fixed_r_vary_L``: ``dE(L)`` at fixed ``r``; ``saturation`` is the
    difference of the last two points.
    ``fixed_alpha_vary_L``: ``r = round(alpha L)``, linear fit in ``L``.
    """
    mode = ScanMode.parse(mode) if isinstance(mode, str) else mode
    method = "reduced ring" if params.pbc and params.t_prime == 0.0 else "dense eigensolver"
    if mode is ScanMode.FIXED_L:
        L = params.L
        rs = np.arange(1, L) if r_values is None else np.asarray(r_values, int)
        dE = np.array([domain_wall_energy(params, int(k)) for k in rs])
        lo, hi = fit_range if fit_range is not None else (L / 8, L / 2)
        sel = (rs >= lo) & (rs <= hi)
        fit = linear_fit(rs[sel], dE[sel])
        return DomainWallScan(mode, np.column_stack([rs, dE]), fit, method=method, params=params.to_dict())
    if L_values is None:
        raise ConfigError("L_values required for the L scans")
    Ls = np.asarray(L_values, int)
    if mode is ScanMode.FIXED_R:
        dE = np.array([domain_wall_energy(params.replace(L=int(L)), r) for L in Ls])
        sat = float(dE[-1] - dE[-2]) if dE.size >= 2 else float("nan")
        return DomainWallScan(mode, np.column_stack([Ls, dE]), None, sat, method, params.to_dict())
    dE = np.array([domain_wall_energy(params.replace(L=int(L)), max(1, int(round(alpha * L)))) for L in Ls])
    return DomainWallScan(mode, np.column_stack([Ls, dE]), linear_fit(Ls, dE), method=method,
                          params=params.to_dict())


# -- finite-size scaling -----------------------------------------------------

@dataclass
class PeakEstimate:
    L: int
    beta_peak: float
    height: float
    at_edge: bool


@dataclass
class BetaCEstimate:
    beta_c: float
    err: float
    peaks: list[PeakEstimate]
    reliable: bool
    reason: str = ""


def locate_peak(series: ObservableSeries, window: tuple[float, float] | None = None) -> PeakEstimate:
    """Maximum of a series refined by a parabola through the three points
    around the largest sample."""
    x, y = series.axis, series.mean
    if window is not None:
        sel = (x >= window[0]) & (x <= window[1])
        x, y = x[sel], y[sel]
    if x.size == 0:
        raise ConfigError("no points in peak window")
    order = np.argsort(x)
    x, y = x[order], y[order]
    i = int(np.argmax(y))
    if i == 0 or i == x.size - 1:
        return PeakEstimate(series.L, float(x[i]), float(y[i]), True)
    c = np.polyfit(x[i - 1:i + 2], y[i - 1:i + 2], 2)
    if c[0] >= 0:
        return PeakEstimate(series.L, float(x[i]), float(y[i]), False)
    xp = -c[1] / (2 * c[0])
    return PeakEstimate(series.L, float(xp), float(np.polyval(c, xp)), False)


def betac_from_scaling(cv_by_L: Mapping[int, ObservableSeries] | Sequence[ObservableSeries],
                       window: tuple[float, float] | None = None) -> BetaCEstimate:
    """Extrapolate ``C_V`` peak positions linearly in ``1/L`` to ``1/L = 0``.

    The estimate is flagged unreliable when a peak sits at the window edge or
    when the peak height does not grow with ``L`` (ratio of the largest-``L``
    to the smallest-``L`` height below 1.25), i.e. no sharpening.
    """
    series = list(cv_by_L.values()) if isinstance(cv_by_L, Mapping) else list(cv_by_L)
    series.sort(key=lambda s: s.L)
    peaks = [locate_peak(s, window) for s in series]
    inv_L = np.array([1.0 / p.L for p in peaks])
    bp = np.array([p.beta_peak for p in peaks])
    reasons = []
    if len(peaks) < 2:
        return BetaCEstimate(float(bp[0]) if peaks else float("nan"), float("nan"), peaks, False,
                             "need at least two sizes")
    if len(peaks) >= 3:
        coef, cov = np.polyfit(inv_L, bp, 1, cov=True)
        err = float(np.sqrt(cov[1, 1]))
    else:
        coef = np.polyfit(inv_L, bp, 1)
        err = float("nan")
    if any(p.at_edge for p in peaks):
        reasons.append("peak at window edge")
    ratio = peaks[-1].height / peaks[0].height if peaks[0].height > 0 else float("inf")
    if not ratio >= SHARPENING_MIN_RATIO:
        reasons.append(f"no peak sharpening (height ratio {ratio:.3f})")
    return BetaCEstimate(float(coef[1]), err, peaks, not reasons, "; ".join(reasons))


# -- sample-level helpers ----------------------------------------------------

def sectored_mean(values: Sequence[np.ndarray], sectors: Sequence[np.ndarray], n_bins: int = 32):
    bins = pooled_bins([v * s for v, s in zip(values, sectors)], n_bins)
    return jackknife(lambda a: a, bins)


def samples_of(result: RunResult) -> list[Samples]:
    return [c.samples for c in result.chains]


def exact_series(params: ModelParams, betas, tag: str) -> ObservableSeries:
    vals = [getattr(exact.exact_observables(params.replace(beta=float(b))), tag) for b in betas]
    return ObservableSeries("beta", betas, vals, np.zeros(len(vals)), params.L, tag)

