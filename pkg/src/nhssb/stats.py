"""Binning, jackknife and autocorrelation estimates for Monte Carlo series."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Estimate:
    mean: float
    err: float
    tau: float = float("nan")

    def sigma_distance(self, value: float) -> float:
        """``|mean - value| / err`` (inf when the error vanishes but values differ)."""
        diff = abs(self.mean - value)
        if self.err > 0:
            return diff / self.err
        return 0.0 if diff == 0 else float("inf")

    def as_dict(self) -> dict:
        return {"mean": self.mean, "err": self.err, "tau": self.tau}


def autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window.

    Returns 0.5 for uncorrelated data; ``nan`` for series shorter than 4.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float("nan")
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0:
        return 0.5
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (n * var)
    tau = 0.5
    for w in range(1, n):
        tau += acf[w]
        if w >= c * tau:
            break
    return float(max(tau, 0.5))


def bin_means(x: np.ndarray, n_bins: int) -> np.ndarray:
    """Means of ``n_bins`` equal contiguous bins; leading remainder is dropped."""
    x = np.asarray(x)
    n_bins = max(1, min(n_bins, x.shape[0]))
    size = x.shape[0] // n_bins
    start = x.shape[0] - size * n_bins
    return x[start:].reshape((n_bins, size) + x.shape[1:]).mean(axis=1)


def jackknife(func: Callable[..., float], *bins: np.ndarray) -> tuple[float, float]:
    """Jackknife mean and error of ``func`` applied to per-bin means.

    Each entry of ``bins`` holds one bin mean per row; ``func`` receives the
    corresponding full or leave-one-out averages.
    """
    bins = [np.asarray(b) for b in bins]
    nb = bins[0].shape[0]
    full = func(*[b.mean(axis=0) for b in bins])
    if nb < 2:
        return float(full), float("nan")
    sums = [b.sum(axis=0) for b in bins]
    loo = np.array([func(*[(s - b[i]) / (nb - 1) for s, b in zip(sums, bins)]) for i in range(nb)])
    err = np.sqrt((nb - 1) / nb * np.sum((loo - loo.mean()) ** 2))
    # bias-corrected estimate
    est = nb * full - (nb - 1) * loo.mean()
    return float(est), float(err)


def pooled_bins(series: Sequence[np.ndarray], n_bins: int) -> np.ndarray:
    """Bin every chain separately and stack the bins."""
    return np.concatenate([bin_means(s, n_bins) for s in series if len(s)], axis=0)


def mean_estimate(series: Sequence[np.ndarray], n_bins: int) -> Estimate:
    bins = pooled_bins(series, n_bins)
    mean, err = jackknife(lambda a: a, bins)
    taus = [autocorr_time(s) for s in series if len(s) >= 4]
    return Estimate(mean, err, float(np.mean(taus)) if taus else float("nan"))
