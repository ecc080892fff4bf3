"""Non-Hermitian single-particle kernel.

Everything thermal here follows from the grand-canonical fermion trace

    Tr exp(-beta H(X)) = prod_n (1 + exp(-beta eps_n)),

with ``eps_n`` the (generally complex) eigenvalues of the hopping matrix.  For
real ``h`` the eigenvalues come in conjugate pairs, so the product is real and
non-negative and can serve as a Monte Carlo weight.  All exponentials are
evaluated branch-wise so that ``|beta * eps|`` of several hundred is harmless.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import SpectralError
from .model import HoppingMatrix, ModelParams, SpinConfig, build_hopping, hopping_terms

logger = logging.getLogger(__name__)

PAIR_RTOL = 1e-8
# phase (radians) tolerated in the product of (1 + e^{-beta eps}) before the
# weight is declared non-real
PHASE_TOL = 1e-6
COND_MAX = 1e10


@dataclass
class SpectralData:
    """Complex single-particle spectrum of one hopping matrix."""

    eigs: np.ndarray
    real_input: bool = True
    tol_used: float = field(default=0.0)

    def __post_init__(self):
        self.eigs = np.asarray(self.eigs, dtype=complex)
        if self.tol_used == 0.0:
            self.tol_used = PAIR_RTOL * max(1.0, float(np.max(np.abs(self.eigs), initial=0.0)))

    @property
    def L(self) -> int:
        return self.eigs.size

    @cached_property
    def pairing(self) -> tuple[list[int], list[tuple[int, int]]]:
        """Indices split into real singletons and conjugate pairs.

        Only meaningful for real input; raises :class:`SpectralError` if the
        spectrum is not closed under conjugation within ``tol_used``.
        """
        tol = self.tol_used
        e = self.eigs
        singles = [int(i) for i in np.flatnonzero(np.abs(e.imag) <= tol)]
        upper = [int(i) for i in np.flatnonzero(e.imag > tol)]
        lower = [int(i) for i in np.flatnonzero(e.imag < -tol)]
        if len(upper) != len(lower):
            raise SpectralError("spectrum is not closed under complex conjugation")
        pairs = []
        remaining = list(lower)
        for i in sorted(upper, key=lambda k: (e[k].real, e[k].imag)):
            dist = [abs(e[i] - np.conj(e[j])) for j in remaining]
            j = int(np.argmin(dist))
            if dist[j] > tol:
                raise SpectralError(f"no conjugate partner for eigenvalue {e[i]!r}")
            pairs.append((i, remaining.pop(j)))
        return singles, pairs

    def is_conjugate_closed(self) -> bool:
        try:
            self.pairing
        except SpectralError:
            return False
        return True


def eigenvalues(h: HoppingMatrix | np.ndarray) -> SpectralData:
    """All eigenvalues of a general (non-symmetric) hopping matrix."""
    mat = h.entries if isinstance(h, HoppingMatrix) else np.asarray(h)
    if not np.all(np.isfinite(mat)):
        raise SpectralError("hopping matrix has non-finite entries")
    try:
        eigs = sla.eigvals(mat, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise SpectralError(f"eigensolver failed: {exc}") from exc
    real_input = not np.iscomplexobj(mat) or bool(np.all(mat.imag == 0))
    return SpectralData(eigs, real_input=real_input)


# -- branch-stable elementwise helpers --------------------------------------

def log1p_exp_neg(z: np.ndarray) -> np.ndarray:
    """``log(1 + exp(-z))`` for complex ``z`` without overflow."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    pos = z.real >= 0
    out[pos] = np.log1p(np.exp(-z[pos]))
    neg = ~pos
    out[neg] = -z[neg] + np.log1p(np.exp(z[neg]))
    return out


def fermi(z: np.ndarray) -> np.ndarray:
    """``1 / (1 + exp(z))`` for complex ``z`` without overflow."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    pos = z.real > 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    neg = ~pos
    out[neg] = 1.0 / (1.0 + np.exp(z[neg]))
    return out


def _real_sum(terms: np.ndarray, what: str, rtol: float = 1e-8) -> float:
    total = complex(np.sum(terms))
    scale = float(np.sum(np.abs(terms))) + 1.0
    if abs(total.imag) > rtol * scale:
        raise SpectralError(f"{what}: imaginary residue {total.imag:.3e} (broken pairing?)")
    return total.real


def _wrapped(phase: float) -> float:
    return (phase + np.pi) % (2 * np.pi) - np.pi


def log_weight(spec: SpectralData, beta: float) -> float:
    """``ln prod_n (1 + exp(-beta eps_n))``.

    Returns ``-inf`` when the product vanishes.  Raises :class:`SpectralError`
    when the product is not real and non-negative.
    """
    terms = log1p_exp_neg(beta * spec.eigs)
    phase = _wrapped(float(np.sum(terms.imag)))
    value = float(np.sum(terms.real))
    if np.isfinite(value) and abs(phase) > PHASE_TOL:
        raise SpectralError(f"fermion weight has phase {phase:.3e}; spectrum not conjugate-paired")
    return value


def fermion_energy(spec: SpectralData, beta: float) -> float:
    """``sum_n eps_n f(eps_n)`` with ``f(e) = 1/(1+exp(beta e))``."""
    e = spec.eigs
    return _real_sum(e * fermi(beta * e), "fermion_energy")


def denergy_dbeta(spec: SpectralData, beta: float) -> float:
    """``d/dbeta`` of :func:`fermion_energy`, i.e. ``-sum eps^2 f (1 - f)``."""
    e = spec.eigs
    z = beta * e
    return _real_sum(-(e * e) * fermi(z) * fermi(-z), "denergy_dbeta")


class GroundState(NamedTuple):
    energy: float
    n_flagged: int


def ground_state(spec: SpectralData, tol: float | None = None) -> GroundState:
    """Many-body ground state at zero chemical potential.

    Modes with ``Re eps < -tol`` are filled; modes with ``|Re eps| <= tol`` are
    counted as flagged and contribute ``Re eps / 2``.
    """
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(spec.eigs), initial=0.0)))
    e = spec.eigs
    filled = e.real < -tol
    zero = np.abs(e.real) <= tol
    energy = _real_sum(e[filled], "ground_state_energy") + 0.5 * float(np.sum(e[zero].real))
    n_flagged = int(np.count_nonzero(zero))
    if n_flagged:
        logger.debug("ground state: %d mode(s) with Re eps ~ 0 counted half-filled", n_flagged)
    return GroundState(energy, n_flagged)


def ground_state_energy(spec: SpectralData) -> float:
    return ground_state(spec).energy


@dataclass
class CorrelationResult:
    G: np.ndarray
    condition: float
    regularized: bool = False


def correlation(h: HoppingMatrix | np.ndarray, beta: float, cond_max: float = COND_MAX) -> CorrelationResult:
    """Thermal one-body correlator ``G = (1 + exp(beta h))^{-1}`` with diagnostics.

    ``<c^dag_a c_b> = G[b, a]``.  Near exceptional points, where the eigenbasis
    is ill-conditioned, ``h`` is perturbed by a tiny deterministic random
    diagonal and the regularization is reported.
    """
    mat = h.entries if isinstance(h, HoppingMatrix) else np.asarray(h)
    real = not np.iscomplexobj(mat)
    scale = max(1.0, float(np.max(np.abs(mat), initial=0.0)))
    G, cond = _correlation_eig(mat, beta)
    regularized = False
    if not np.isfinite(cond) or cond > cond_max:
        noise = np.random.default_rng(0).standard_normal(mat.shape[0])
        G, cond = _correlation_eig(mat + np.diag(1e-10 * scale * noise), beta)
        regularized = True
        logger.debug("correlation matrix: regularized ill-conditioned eigenbasis (cond=%.2e)", cond)
        if not np.isfinite(cond) or cond > cond_max:
            raise SpectralError(f"eigenbasis ill-conditioned even after regularization (cond={cond:.2e})")
    if real:
        G = G.real
    return CorrelationResult(G, cond, regularized)


def _correlation_eig(mat: np.ndarray, beta: float):
    try:
        w, R = sla.eig(mat, check_finite=False)
        cond = float(np.linalg.cond(R))
        if not np.isfinite(cond):
            return None, np.inf
        Rinv = sla.inv(R, check_finite=False)
    except (sla.LinAlgError, ValueError):
        return None, np.inf
    return (R * fermi(beta * w)) @ Rinv, cond


def correlation_matrix(h: HoppingMatrix | np.ndarray, beta: float) -> np.ndarray:
    return correlation(h, beta).G


def _gauge_applicable(params: ModelParams) -> bool:
    return (not params.pbc and params.t_prime == 0.0 and params.is_real
            and abs(params.U_re) < abs(params.t))


def open_chain_correlation(params: ModelParams, config: SpinConfig) -> np.ndarray:
    """``G`` for an open chain at ``t'=0``, ``|U| < t`` via the diagonal gauge.

    ``h = S h_s S^{-1}`` with ``h_s`` real symmetric, so ``G = S G_s S^{-1}``
    and only a Hermitian eigensolve is needed.
    """
    if not _gauge_applicable(params):
        raise SpectralError("gauge correlator needs OBC, t'=0 and real |U| < t")
    L, t, U = params.L, params.t, params.U_re
    x = config.x[: L - 1].astype(float)
    right, left = t + U * x, t - U * x
    log_s = np.concatenate([[0.0], np.cumsum(0.5 * (np.log(np.abs(right)) - np.log(np.abs(left))))])
    log_s -= log_s.mean()
    hop = np.sign(right) * np.sqrt(right * left)
    w, R = sla.eigh_tridiagonal(np.zeros(L), hop)
    Gs = (R * fermi(params.beta * w).real) @ R.T
    return np.exp(log_s[:, None] - log_s[None, :]) * Gs


def thermal_correlation(params: ModelParams, config: SpinConfig) -> np.ndarray:
    """``G`` for a configuration, choosing the most stable available route."""
    if _gauge_applicable(params):
        return open_chain_correlation(params, config)
    return correlation(build_hopping(params, config), params.beta).G


def velocity_matrix(params: ModelParams, config: SpinConfig) -> np.ndarray:
    """Velocity operator ``v = i[H, x]`` with ring displacements.

    ``V[a, b] = -i d h_ab`` for a hop ``b -> a`` of displacement ``d``, so that
    a plane wave ``e^{ikx}`` of a uniform chain has ``<k|V|k> = d eps / dk``.
    """
    a, b, amp, disp = hopping_terms(params, config)
    V = np.zeros((params.L, params.L), dtype=complex)
    np.add.at(V, (a, b), -1j * disp * amp)
    return V


def velocity_expectation(params: ModelParams, config: SpinConfig, G: np.ndarray | None = None) -> complex:
    """``<v> = sum_ab V_ab <c^dag_a c_b> = sum_ab V_ab G_ba``."""
    if G is None:
        G = thermal_correlation(params, config)
    V = velocity_matrix(params, config)
    return complex(np.sum(V * G.T))


def winding(params: ModelParams, v: complex) -> float:
    """Path-integral winding estimate ``Im<v> beta / L``."""
    return float(np.imag(v)) * params.beta / params.L


def sector_of(m: float, im_v: float, L: int, tol: float = 1e-9) -> int:
    """Symmetry sector of one sample: ``sign(m)`` when ``|m| > 1/L``, else
    ``sign(Im v)`` when it is resolvable, else ``+1``."""
    if abs(m) * L > 1.0 + 1e-9:
        return 1 if m > 0 else -1
    if np.isfinite(im_v) and abs(im_v) > tol * L:
        return 1 if im_v > 0 else -1
    return 1


def bond_currents(params: ModelParams, config: SpinConfig, G: np.ndarray) -> np.ndarray:
    """Per-bond contributions ``j_i`` to ``<v>`` (``sum_i j_i == <v>``).

    A hop is attributed to the bond at its left end; next-nearest hops starting
    at site ``i`` are attributed to bond ``i``.
    """
    a, b, amp, disp = hopping_terms(params, config)
    contrib = -1j * disp * amp * G[b, a]
    bond = np.where(disp > 0, b, a)
    j = np.zeros(params.L, dtype=complex)
    np.add.at(j, bond, contrib)
    return j


def config_spectrum(params: ModelParams, config: SpinConfig) -> SpectralData:
    """Spectrum of the sign-canonical member of ``{X, -X}``.

    ``h(-X)`` is the transpose of ``h(X)`` and has the same spectrum; evaluating
    on a fixed representative makes weights of ``X`` and ``-X`` bit-identical.
    """
    if config.x[0] < 0:
        config = -config
    return eigenvalues(build_hopping(params, config))


def config_log_weight(params: ModelParams, config: SpinConfig) -> float:
    return log_weight(config_spectrum(params, config), params.beta)
