"""Independent reference calculations used by tests and ``nhssb validate``.

* Many-body enumeration of the fermion trace in the full ``2^L`` Fock space
  (Jordan-Wigner signs, dense matrix exponential).
* Transfer-matrix results for the classical Ising chain, including the
  magnetization distribution via a magnetization-resolved transfer matrix.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError


def many_body_hamiltonian(h: np.ndarray) -> np.ndarray:
    """Fock-space matrix of ``sum_ab h_ab c^dag_a c_b``; basis states are bit patterns."""
    L = h.shape[0]
    if L > 10:
        raise ConfigError("many-body enumeration limited to L <= 10")
    dim = 2 ** L
    H = np.zeros((dim, dim), dtype=complex)
    for state in range(dim):
        for b in range(L):
            if not state >> b & 1:
                continue
            sign_b = (-1) ** bin(state & ((1 << b) - 1)).count("1")
            mid = state ^ (1 << b)
            for a in range(L):
                amp = h[a, b]
                if amp == 0 or mid >> a & 1:
                    continue
                sign_a = (-1) ** bin(mid & ((1 << a) - 1)).count("1")
                H[mid | (1 << a), state] += sign_a * sign_b * amp
    return H


def many_body_thermal(h: np.ndarray, beta: float) -> dict:
    """``ln Tr e^{-beta H}``, ``<H>``, ``d<H>/dbeta`` and ``<c^dag_a c_b>``.

    Everything is computed from the dense Fock-space propagator.
    """
    L = h.shape[0]
    H = many_body_hamiltonian(np.asarray(h, dtype=complex))
    # shift by the lowest real part to keep the propagator bounded
    shift = float(np.min(np.linalg.eigvals(H).real))
    rho = sla.expm(-beta * (H - shift * np.eye(H.shape[0])))
    Z = np.trace(rho)
    HR = H @ rho
    E = np.trace(HR) / Z
    E2 = np.trace(H @ HR) / Z
    corr = np.zeros((L, L), dtype=complex)
    for a in range(L):
        for b in range(L):
            e_ab = np.zeros((L, L))
            e_ab[a, b] = 1.0
            corr[a, b] = np.trace(many_body_hamiltonian(e_ab) @ rho) / Z
    return {
        "log_z": float(np.log(Z.real)) - beta * shift,
        "z_phase": float(np.angle(Z)),
        "energy": complex(E),
        "denergy_dbeta": complex(-(E2 - E * E)),
        "corr": corr,
    }


def log_det_weight(h: np.ndarray, beta: float) -> float:
    """``ln det(1 + e^{-beta h})`` via a dense matrix exponential."""
    sign, logdet = np.linalg.slogdet(np.eye(h.shape[0]) + sla.expm(-beta * np.asarray(h)))
    return float(np.real(logdet))


# -- classical Ising chain ---------------------------------------------------

def _ring_bond_mean(L: int, K: float) -> tuple[float, float]:
    """``u = <s_i s_{i+1}>`` on a ring and ``du/dK`` from ``Z = l+^L + l-^L``."""
    t = np.tanh(K)
    num = t + t ** (L - 1)
    den = 1 + t ** L
    dnum = 1 + (L - 1) * t ** (L - 2)
    dden = L * t ** (L - 1)
    u = num / den
    du_dt = (dnum * den - num * dden) / den ** 2
    return float(u), float(du_dt * (1 - t * t))


def ising_chain_energy(L: int, beta: float, J: float, pbc: bool = True) -> tuple[float, float]:
    """Exact ``<E>/L`` and ``C/L`` of the zero-field Ising chain (transfer matrix)."""
    K = beta * J
    if pbc:
        u, du = _ring_bond_mean(L, K)
        return -J * u, K * K * du
    t = np.tanh(K)
    nb = L - 1
    return float(-J * nb * t / L), float(nb * K * K * (1 - t * t) / L)


def ising_magnetization_distribution(L: int, K: float, pbc: bool = True) -> np.ndarray:
    """Probability of ``n`` down spins for the zero-field Ising chain.

    Built from 2x2 transfer matrices whose entries are polynomials in a
    fugacity for down spins; entry ``[n]`` of the result is ``P(n_minus = n)``.
    """
    w_same, w_diff = 1.0, np.exp(-2 * K)  # relative bond weights e^{K s s'} / e^{K}
    # poly[s0][s] : coefficient array over n for chains that start in s0 and end in s
    poly = {}
    for s0 in (0, 1):
        for s in (0, 1):
            c = np.zeros(L + 1)
            if s == s0:
                c[s0] = 1.0
            poly[s0, s] = c
    for _ in range(L - 1):
        new = {}
        for s0 in (0, 1):
            for s in (0, 1):
                acc = np.zeros(L + 1)
                for sp in (0, 1):
                    wt = w_same if sp == s else w_diff
                    shifted = np.roll(poly[s0, sp], s)
                    if s:
                        shifted[0] = 0.0
                    acc += wt * shifted
                new[s0, s] = acc
        poly = new
        norm = max(np.max(v) for v in poly.values())
        for key in poly:
            poly[key] = poly[key] / norm
    total = np.zeros(L + 1)
    for s0 in (0, 1):
        for s in (0, 1):
            close = (w_same if s == s0 else w_diff) if pbc else 1.0
            total += close * poly[s0, s]
    return total / total.sum()


def ising_abs_m(L: int, K: float, pbc: bool = True) -> float:
    p = ising_magnetization_distribution(L, K, pbc)
    n = np.arange(L + 1)
    return float(np.sum(p * np.abs(L - 2 * n)) / L)


def ising_ring_correlation(L: int, K: float, r: np.ndarray) -> np.ndarray:
    """``<s_i s_{i+r}>`` on a ring of ``L`` spins."""
    t = np.tanh(K)
    r = np.asarray(r)
    return (t ** r + t ** (L - r)) / (1 + t ** L)
