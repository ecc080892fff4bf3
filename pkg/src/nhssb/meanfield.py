"""Self-consistent mean-field treatment of the bond field.

Replacing ``X_i`` by its thermal average ``m`` leaves fermions with the band

    eps_k(m) = 2t cos k + 2t' cos 2k + 2iUm sin k,

and each bond in the effective field ``g(m) X`` with

    g(m) = Re[(2iU/L) sum_k f(eps_k) sin k] - 2Jm,

so that ``m = -tanh(beta g(m))``.  Solutions are found by damped fixed-point
iteration from several seeds and ranked by a free-energy functional.

Two functionals are available (both are even in ``m``):

``"standard"``
    ``F = Omega_f(m) + L J m^2 - (L/beta) ln 2cosh(beta g(m))``: fermion grand
    potential in the mean band, the Ising double-counting correction and the
    bond-spin partition function in the field ``-g``.
``"variational"``
    ``F = Omega_f(m) - L J m^2 - T S(m)`` with ``S`` the binary entropy of
    independent bonds; its stationary points are exactly the fixed points.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .model import ModelParams
from .spectral import fermi, log1p_exp_neg

logger = logging.getLogger(__name__)

DAMPING = 0.5
TOL = 1e-10
MAX_ITER = 10_000
DEDUP_TOL = 1e-6
ORDER_TOL = 1e-4
QUASI_CONTINUUM_L = 4096
DEFAULT_SEEDS = (0.0, 0.02, 0.2, 0.6, 0.95, -0.02, -0.2, -0.6, -0.95)
FUNCTIONALS = ("standard", "variational")


@dataclass
class MFState:
    m: float
    g_current: float
    free_energy: float
    converged: bool
    iterations: int
    seed: float = float("nan")

    def as_dict(self) -> dict:
        return asdict(self)


def momenta(L: int) -> np.ndarray:
    return 2 * np.pi * np.arange(L) / L


def mf_dispersion(k, m, params: ModelParams):
    """Mean-field band ``2t cos k + 2t' cos 2k + 2iUm sin k``."""
    k = np.asarray(k, dtype=float)
    return (2 * params.t * np.cos(k) + 2 * params.t_prime * np.cos(2 * k)
            + 2j * params.U * np.asarray(m) * np.sin(k))


def _fermion_field(m_abs: np.ndarray, params: ModelParams, L: int) -> np.ndarray:
    """``Re[(2iU/L) sum_k f sin k]`` for each entry of ``m_abs`` (vectorized).

    Modes ``k`` and ``-k`` are evaluated separately and summed pairwise; the
    ``k = 0, pi`` modes carry ``sin k = 0``.
    """
    k = momenta(L)[1:(L + 1) // 2]
    mm = np.asarray(m_abs, float)[:, None]
    beta = params.beta
    f_plus = fermi(beta * mf_dispersion(k[None, :], mm, params))
    f_minus = fermi(beta * mf_dispersion(-k[None, :], mm, params))
    terms = (f_plus - f_minus) * np.sin(k)[None, :]
    total = 2j * params.U * terms.sum(axis=1) / L
    scale = 2 * abs(params.U) * (np.abs(terms).sum(axis=1) / L + 1.0)
    if np.any(np.abs(total.imag) > 1e-10 * scale):
        raise ArithmeticError(f"mean field has an imaginary residue {np.max(np.abs(total.imag)):.3e}")
    return total.real


def mf_field_array(m, params: ModelParams, L: int | None = None) -> np.ndarray:
    m = np.atleast_1d(np.asarray(m, float))
    L = params.L if L is None else L
    gf = np.sign(m) * _fermion_field(np.abs(m), params, L)
    return gf - 2 * params.J * m


def mf_field(m: float, params: ModelParams, L: int | None = None) -> float:
    """Effective field ``g(m)`` on a bond; exactly odd in ``m``."""
    return float(mf_field_array([m], params, L)[0])


def fermion_grand_potential(m, params: ModelParams, L: int | None = None) -> np.ndarray:
    """``-(1/beta) sum_k Re ln(1 + e^{-beta eps_k(m)})``."""
    m = np.atleast_1d(np.abs(np.asarray(m, float)))
    L = params.L if L is None else L
    k = momenta(L)
    eps = mf_dispersion(k[None, :], m[:, None], params)
    return -log1p_exp_neg(params.beta * eps).real.sum(axis=1) / params.beta


def _binary_entropy(m: np.ndarray) -> np.ndarray:
    p = np.clip((1 + m) / 2, 0.0, 1.0)
    q = 1 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(q > 0, q * np.log(q), 0.0))
    return s


def free_energy(m, params: ModelParams, L: int | None = None, functional: str = "standard") -> np.ndarray:
    """Mean-field free energy of the whole ring (see module docstring)."""
    if functional not in FUNCTIONALS:
        raise ConfigError(f"unknown functional {functional!r}")
    m = np.atleast_1d(np.asarray(m, float))
    L = params.L if L is None else L
    beta, J = params.beta, params.J
    omega = fermion_grand_potential(m, params, L)
    if functional == "standard":
        g = mf_field_array(m, params, L)
        x = beta * np.abs(g)
        log2cosh = x + np.log1p(np.exp(-2 * x))
        return omega + L * J * m * m - (L / beta) * log2cosh
    return omega - L * J * m * m - L * _binary_entropy(np.abs(m)) / beta


def _iterate(seeds: np.ndarray, params: ModelParams, L: int, damping: float, tol: float, max_iter: int):
    """Damped iteration for all seeds at once.

    A seed's damping is halved whenever its step fails to contract, which
    tames the period-two oscillations of steep maps at low temperature.
    """
    m = np.array(seeds, float)
    lam = np.full(m.size, damping)
    last = np.full(m.size, np.inf)
    active = np.ones(m.size, bool)
    iters = np.zeros(m.size, int)
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        target = -np.tanh(params.beta * mf_field_array(m[idx], params, L))
        step = target - m[idx]
        grow = np.abs(step) >= np.abs(last[idx])
        lam[idx[grow]] = np.maximum(lam[idx[grow]] * 0.5, 1e-3)
        new = m[idx] + lam[idx] * step
        done = np.abs(new - m[idx]) < tol
        last[idx] = step
        m[idx] = new
        iters[idx] = it
        active[idx[done]] = False
    return m, ~active, iters


def _iterate_symmetric(seeds: np.ndarray, params: ModelParams, L: int, damping: float, tol: float,
                       max_iter: int):
    """Iterate ``|seed|`` once and mirror; ``g`` is odd so trajectories are too."""
    mag, inv = np.unique(np.abs(seeds), return_inverse=True)
    m, conv, iters = _iterate(mag, params, L, damping, tol, max_iter)
    sign = np.where(seeds < 0, -1.0, 1.0)
    return sign * m[inv], conv[inv], iters[inv]


def solve_selfconsistent(params: ModelParams, seeds=DEFAULT_SEEDS, L: int | None = None,
                         functional: str = "standard", damping: float = DAMPING,
                         tol: float = TOL, max_iter: int = MAX_ITER) -> list[MFState]:
    """Fixed points of ``m = -tanh(beta g(m))`` reached from each seed.

    Converged solutions are deduplicated within ``1e-6`` and sorted by free
    energy; unconverged seeds are returned with ``converged=False`` and logged.
    """
    L = params.L if L is None else L
    seeds = np.asarray(list(seeds), float)
    if np.any(np.abs(seeds) > 1):
        raise ConfigError("seeds must lie in [-1, 1]")
    m, conv, iters = _iterate_symmetric(seeds, params, L, damping, tol, max_iter)
    g = mf_field_array(m, params, L)
    F = free_energy(m, params, L, functional)
    out: list[MFState] = []
    for i in np.argsort(F, kind="stable"):
        if not conv[i]:
            logger.warning("mean field: seed %.3f did not converge (m=%.6f after %d iterations)",
                           seeds[i], m[i], iters[i])
            out.append(MFState(float(m[i]), float(g[i]), float(F[i]), False, int(iters[i]), float(seeds[i])))
            continue
        if any(s.converged and abs(s.m - m[i]) < DEDUP_TOL for s in out):
            continue
        out.append(MFState(float(m[i]), float(g[i]), float(F[i]), True, int(iters[i]), float(seeds[i])))
    return out


def fixed_point_residual(state: MFState, params: ModelParams, L: int | None = None) -> float:
    return abs(state.m + np.tanh(params.beta * mf_field(state.m, params, L)))


def select(states: list[MFState]) -> MFState | None:
    """Lowest free energy among converged solutions (``+m`` on ties)."""
    conv = [s for s in states if s.converged]
    if not conv:
        return None
    fmin = min(s.free_energy for s in conv)
    tied = [s for s in conv if s.free_energy - fmin <= 1e-10 * max(1.0, abs(fmin))]
    return max(tied, key=lambda s: s.m)


def ordered(params: ModelParams, L: int | None = None, functional: str = "standard",
            seeds=DEFAULT_SEEDS) -> bool:
    best = select(solve_selfconsistent(params, seeds, L, functional))
    return best is not None and abs(best.m) > ORDER_TOL


@dataclass
class BoundaryColumn:
    """Transitions in ``T`` at fixed ``U``.

    ``crossings`` lists ``(T, kind)`` with kind ``"upper"`` when order is lost
    on heating and ``"lower"`` when it is lost on cooling (re-entrance).
    """

    U: float
    crossings: list[tuple[float, str]] = field(default_factory=list)
    ordered_grid: list[bool] = field(default_factory=list)

    @property
    def T_c(self) -> float:
        ups = [T for T, kind in self.crossings if kind == "upper"]
        if ups:
            return max(ups)
        return float("inf") if any(self.ordered_grid) and self.ordered_grid[-1] else float("nan")

    @property
    def T_low(self) -> float:
        lows = [T for T, kind in self.crossings if kind == "lower"]
        return min(lows) if lows else float("nan")


@dataclass
class PhaseBoundary:
    columns: list[BoundaryColumn]
    T_grid: np.ndarray
    J: float
    L: int
    functional: str

    def polyline(self) -> np.ndarray:
        """``(U, T_c)`` rows for columns with an upper transition."""
        rows = [(c.U, c.T_c) for c in self.columns if np.isfinite(c.T_c)]
        return np.array(rows, float).reshape(-1, 2)

    @property
    def is_empty(self) -> bool:
        return not any(any(c.ordered_grid) for c in self.columns)


def trace_boundary(params: ModelParams, U_values, T_values, L: int | None = None,
                   functional: str = "standard", dT: float = 1e-3, seeds=DEFAULT_SEEDS) -> PhaseBoundary:
    """Ordered region in the ``U``-``T`` plane.

    For each ``U`` the order predicate is evaluated on the ``T`` grid and every
    change between neighbouring grid points is refined by bisection to ``dT``.
    """
    L = params.L if L is None else L
    T_values = np.sort(np.asarray(T_values, float))
    if np.any(T_values <= 0):
        raise ConfigError("temperatures must be positive")
    cols = []
    for U in U_values:
        base = params.replace(U_re=float(U), U_im=0.0)

        def pred(T):
            return ordered(base.replace(beta=1.0 / T), L, functional, seeds)

        flags = [pred(T) for T in T_values]
        col = BoundaryColumn(float(U), ordered_grid=flags)
        for a, b, fa, fb in zip(T_values[:-1], T_values[1:], flags[:-1], flags[1:]):
            if fa == fb:
                continue
            lo, hi = a, b
            while hi - lo >= dT:
                mid = 0.5 * (lo + hi)
                if pred(mid) == fa:
                    lo = mid
                else:
                    hi = mid
            col.crossings.append((0.5 * (lo + hi), "upper" if fa else "lower"))
        cols.append(col)
    return PhaseBoundary(cols, T_values, params.J, L, functional)


def scan_grid(params: ModelParams, U_values, T_values, L: int | None = None,
              functional: str = "standard", seeds=DEFAULT_SEEDS) -> list[dict]:
    """Selected solution at each ``(U, T)`` grid point."""
    L = params.L if L is None else L
    rows = []
    for U in U_values:
        for T in T_values:
            p = params.replace(U_re=float(U), U_im=0.0, beta=1.0 / float(T))
            states = solve_selfconsistent(p, seeds, L, functional)
            best = select(states)
            rows.append({
                "U": float(U), "T": float(T),
                "m_selected": abs(best.m) if best else float("nan"),
                "F": best.free_energy if best else float("nan"),
                "n_solutions": sum(s.converged for s in states),
            })
    return rows
