"""Exact thermal averages over bond configurations.

At ``t' = 0`` on a ring, a diagonal gauge transformation turns ``h(X)`` into a
translation-invariant Hatano-Nelson ring whose right/left hoppings ``A, B``
only depend on ``prod_i (t + U X_i) = (t+U)^{n_+} (t-U)^{n_-}``.  The fermion
weight is therefore a function of ``n_-`` alone and the Ising energy of the
number of domain walls ``k``, so the sum over ``2^L`` configurations collapses
to a sum over ``(n_-, k)`` classes with combinatorial multiplicities.

:func:`brute_force` enumerates every configuration with a dense eigensolve and
serves as the independent reference for any ``t'`` and boundary condition.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError
from .model import ModelParams, SpinConfig, build_hopping, ising_energy
from . import spectral


@dataclass
class HNReducedSpectrum:
    """Spectrum of the gauge-reduced uniform ring for a given ``n_minus``.

    ``eps_m = A e^{-i theta_m} + B e^{i theta_m}`` with ``theta_m = 2 pi m / L``,
    ``A`` the principal ``L``-th root of the product of right hoppings and
    ``B = (t^2 - U^2) / A``.  ``phase`` is the argument of that product; it is
    nonzero (a flux through the ring) only for ``|U| > t`` with odd ``n_minus``
    or for imaginary ``U``.
    """

    L: int
    n_minus: int
    log_amp: complex
    A: complex
    B: complex
    eigs: np.ndarray = field(repr=False)

    @property
    def phase(self) -> float:
        return self.log_amp.imag

    @property
    def amp_product(self) -> complex:
        return cmath.exp(self.log_amp)

    @property
    def flux_flagged(self) -> bool:
        return abs(self.phase) > 1e-12

    @property
    def thetas(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.L) / self.L

    @property
    def velocities(self) -> np.ndarray:
        """``d eps / d theta`` for each mode."""
        th = self.thetas
        return -1j * self.A * np.exp(-1j * th) + 1j * self.B * np.exp(1j * th)

    def spectral_data(self, real_input: bool = True) -> spectral.SpectralData:
        return spectral.SpectralData(self.eigs, real_input=real_input)


def hn_spectrum(L: int, n_minus: int, params: ModelParams) -> HNReducedSpectrum:
    if params.t_prime != 0.0 or not params.pbc:
        raise ConfigError("Hatano-Nelson reduction needs t'=0 and periodic boundaries")
    if not 0 <= n_minus <= L:
        raise ConfigError(f"n_minus={n_minus} outside [0, {L}]")
    t, U = params.t, params.U
    right_plus, right_minus = complex(t + U), complex(t - U)
    if right_plus == 0 or right_minus == 0:
        raise ConfigError("t +- U must be nonzero")
    log_amp = (L - n_minus) * cmath.log(right_plus) + n_minus * cmath.log(right_minus)
    # principal branch of the product
    phase = (log_amp.imag + math.pi) % (2 * math.pi) - math.pi
    if math.isclose(phase, -math.pi):
        phase = math.pi
    log_amp = complex(log_amp.real, phase)
    A = cmath.exp(log_amp / L)
    B = complex(t * t - U * U) / A
    th = 2 * np.pi * np.arange(L) / L
    eigs = A * np.exp(-1j * th) + B * np.exp(1j * th)
    return HNReducedSpectrum(L, n_minus, log_amp, A, B, eigs)


def obc_spectrum(params: ModelParams) -> np.ndarray:
    """Open-chain spectrum at ``t'=0``; independent of the configuration.

    A diagonal gauge transformation symmetrizes every bond to
    ``sqrt(t^2 - U^2)``, leaving the uniform open chain.
    """
    if params.t_prime != 0.0 or params.pbc:
        raise ConfigError("open-chain reduction needs t'=0 and open boundaries")
    hop = cmath.sqrt(complex(params.t ** 2 - params.U ** 2))
    k = np.arange(1, params.L + 1)
    return 2 * hop * np.cos(np.pi * k / (params.L + 1))


def ring_multiplicity(L: int, n: int, k: int) -> int:
    """Number of ring configurations with ``n`` minus bonds and ``k`` domain walls."""
    if not 0 <= n <= L or k < 0 or k % 2:
        return 0
    if n == 0 or n == L:
        return 1 if k == 0 else 0
    j = k // 2
    if j == 0:
        return 0
    num = L * math.comb(n - 1, j - 1) * math.comb(L - n - 1, j - 1)
    count, rem = divmod(num, j)
    assert rem == 0, (L, n, k)
    return count


@dataclass
class ExactResult:
    """Thermal averages; energies and specific heat are per site."""

    log_z: float
    abs_m: float
    m2: float
    energy: float
    specific_heat: float
    winding_sector: float
    winding: float

    def as_dict(self) -> dict:
        return asdict(self)

    def as_array(self) -> np.ndarray:
        return np.array(list(self.as_dict().values()))


def _reduce(params: ModelParams, logw, m, e_tot, de_f, w, sector) -> ExactResult:
    logw = np.asarray(logw, float)
    log_z = float(logsumexp(logw))
    p = np.exp(logw - log_z)
    p /= p.sum()
    e_tot = np.asarray(e_tot, float)
    mean_e = float(np.sum(p * e_tot))
    var_e = float(np.sum(p * (e_tot - mean_e) ** 2))
    beta, L = params.beta, params.L
    cv = beta * beta * (var_e - float(np.sum(p * np.asarray(de_f)))) / L
    w = np.asarray(w, float)
    m = np.asarray(m, float)
    return ExactResult(
        log_z=log_z,
        abs_m=float(np.sum(p * np.abs(m))),
        m2=float(np.sum(p * m * m)),
        energy=mean_e / L,
        specific_heat=cv,
        winding_sector=float(np.sum(p * np.asarray(sector) * w)),
        winding=float(np.sum(p * w)),
    )


@dataclass
class ClassTable:
    """Per-``n_minus`` fermion quantities on the reduced ring."""

    log_weight: np.ndarray
    energy: np.ndarray
    denergy: np.ndarray
    velocity: np.ndarray


def class_table(params: ModelParams, with_velocity: bool = True) -> ClassTable:
    L, beta = params.L, params.beta
    lw = np.empty(L + 1)
    ef = np.empty(L + 1)
    de = np.empty(L + 1)
    vel = np.zeros(L + 1, complex)
    for n in range(L + 1):
        hn = hn_spectrum(L, n, params)
        spec = hn.spectral_data(real_input=params.is_real)
        lw[n] = spectral.log_weight(spec, beta)
        ef[n] = spectral.fermion_energy(spec, beta)
        de[n] = spectral.denergy_dbeta(spec, beta)
        if with_velocity:
            vel[n] = complex(np.sum(hn.velocities * spectral.fermi(beta * hn.eigs)))
    return ClassTable(lw, ef, de, vel)


def exact_observables(params: ModelParams, table: ClassTable | None = None) -> ExactResult:
    """Exact averages at ``t' = 0`` on the ring via ``(n_minus, walls)`` classes."""
    if params.t_prime != 0.0 or not params.pbc:
        raise ConfigError("exact_observables needs t'=0 and periodic boundaries")
    L, beta, J = params.L, params.beta, params.J
    if table is None:
        table = class_table(params)
    winding_n = table.velocity.imag * beta / L
    logw, m, e_tot, de_f, w, sector = [], [], [], [], [], []
    for n in range(L + 1):
        mag = (L - 2 * n) / L
        sec = spectral.sector_of(mag, table.velocity[n].imag, L)
        for k in range(0, L + 1, 2):
            count = ring_multiplicity(L, n, k)
            if count == 0:
                continue
            e_j = -J * (L - 2 * k)
            logw.append(math.log(count) - beta * e_j + table.log_weight[n])
            m.append(mag)
            e_tot.append(e_j + table.energy[n])
            de_f.append(table.denergy[n])
            w.append(winding_n[n])
            sector.append(sec)
    return _reduce(params, logw, m, e_tot, de_f, w, sector)


def all_configs(L: int):
    """Every configuration of ``L`` bonds as rows of an int8 array."""
    idx = np.arange(2 ** L, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(L)) & 1
    return (1 - 2 * bits).astype(np.int8)


def brute_force(params: ModelParams, max_L: int = 16, with_velocity: bool = True) -> ExactResult:
    """Reference averages from explicit enumeration of all ``2^L`` configurations."""
    L, beta = params.L, params.beta
    if L > max_L:
        raise ConfigError(f"brute force limited to L <= {max_L}, got {L}")
    logw, m, e_tot, de_f, w, sector = [], [], [], [], [], []
    for x in all_configs(L):
        config = SpinConfig(x)
        h = build_hopping(params, config)
        spec = spectral.eigenvalues(h)
        e_j = ising_energy(config, params)
        logw.append(spectral.log_weight(spec, beta) - beta * e_j)
        e_tot.append(e_j + spectral.fermion_energy(spec, beta))
        de_f.append(spectral.denergy_dbeta(spec, beta))
        mag = config.magnetization
        m.append(mag)
        if with_velocity:
            v = spectral.velocity_expectation(params, config, spectral.correlation_matrix(h, beta))
        else:
            v = complex(np.nan, np.nan)
        w.append(spectral.winding(params, v) if with_velocity else 0.0)
        sector.append(spectral.sector_of(mag, v.imag, L))
    return _reduce(params, logw, m, e_tot, de_f, w, sector)


def magnetization_distribution(params: ModelParams, table: ClassTable | None = None) -> np.ndarray:
    """Exact probability of each ``n_minus`` (index) at ``t'=0`` on the ring."""
    L, beta, J = params.L, params.beta, params.J
    if table is None:
        table = class_table(params, with_velocity=False)
    logp = np.full(L + 1, -np.inf)
    for n in range(L + 1):
        terms = [math.log(c) + beta * J * (L - 2 * k)
                 for k in range(0, L + 1, 2) if (c := ring_multiplicity(L, n, k))]
        logp[n] = logsumexp(terms) + table.log_weight[n]
    return np.exp(logp - logsumexp(logp))
