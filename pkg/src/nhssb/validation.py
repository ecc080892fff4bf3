"""Small-system oracle suite (``L <= 12``) behind ``nhssb validate``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analysis, exact, meanfield, oracles, spectral
from .model import ModelParams, build_hopping, random_config


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def check_exact_vs_brute(max_L: int, rng) -> Check:
    worst = 0.0
    for L in [L for L in (6, 8, 10) if L <= max_L]:
        p = ModelParams(L=L, U_re=rng.uniform(0.1, 0.9), J=rng.uniform(-0.2, 0.3), beta=rng.uniform(0.5, 8))
        a = exact.exact_observables(p).as_array()
        b = exact.brute_force(p).as_array()
        worst = max(worst, _rel(a, b))
    return Check("class sums == enumeration", worst < 1e-10, f"max rel diff {worst:.2e}")


def check_trace_identity(max_L: int, rng) -> Check:
    worst = 0.0
    for L in (4, 6, min(8, max_L)):
        p = ModelParams(L=L, U_re=0.5, t_prime=0.3, beta=2.0)
        c = random_config(L, rng)
        h = build_hopping(p, c)
        lw = spectral.log_weight(spectral.eigenvalues(h), p.beta)
        ld = oracles.log_det_weight(h.entries, p.beta)
        mb = oracles.many_body_thermal(h.entries, p.beta)["log_z"]
        worst = max(worst, abs(lw - ld), abs(lw - mb))
    return Check("log weight == ln det == many-body trace", worst < 1e-8, f"max abs diff {worst:.2e}")


def check_similarity(max_L: int, rng) -> Check:
    worst = 0.0
    L = min(8, max_L)
    p = ModelParams(L=L, U_re=0.4)
    for n in range(L + 1):
        ref = np.sort_complex(np.round(exact.hn_spectrum(L, n, p).eigs, 10))
        for _ in range(5):
            c = random_config(L, rng, n)
            eig = spectral.eigenvalues(build_hopping(p, c)).eigs
            got = np.sort_complex(np.round(eig, 10))
            worst = max(worst, float(np.max(np.abs(got - ref))))
    return Check("spectrum depends on n_minus only (t'=0 ring)", worst < 1e-8, f"max diff {worst:.2e}")


def check_hermiticity(max_L: int, rng) -> Check:
    p = ModelParams(L=max_L, U_re=0.4, t_prime=0.2, beta=3.0)
    worst_v, worst_w = 0.0, 0.0
    for _ in range(10):
        c = random_config(p.L, rng)
        v1 = spectral.velocity_expectation(p, c)
        v2 = spectral.velocity_expectation(p, -c)
        worst_v = max(worst_v, abs(v1 + v2))
        worst_w = max(worst_w, abs(spectral.config_log_weight(p, c) - spectral.config_log_weight(p, -c)))
    ok = worst_v < 1e-10 and worst_w == 0.0
    return Check("<v>(-X) == -<v>(X), weight(-X) == weight(X)", ok,
                 f"|v+v'| {worst_v:.1e}, |dlogw| {worst_w:.1e}")


def check_correlator(max_L: int, rng) -> Check:
    p = ModelParams(L=6, U_re=0.6, t_prime=0.2, beta=1.5)
    c = random_config(6, rng)
    h = build_hopping(p, c).entries
    G = spectral.correlation_matrix(h, p.beta)
    ref = oracles.many_body_thermal(h, p.beta)["corr"]
    diff = float(np.max(np.abs(G.T - ref)))
    return Check("correlation matrix == many-body correlator", diff < 1e-10, f"max diff {diff:.2e}")


def check_specific_heat(max_L: int, rng) -> Check:
    p = ModelParams(L=max_L, U_re=0.4, J=0.1, beta=4.0)
    cv = analysis.specific_heat(None, p)[0]
    num = analysis.energy_derivative_cv(p)
    rel = abs(cv - num) / abs(num)
    return Check("fluctuation C_V == -beta^2 dE/dbeta", rel < 1e-4, f"rel diff {rel:.2e}")


def check_denergy(max_L: int, rng) -> Check:
    p = ModelParams(L=max_L, U_re=0.4, t_prime=0.2)
    spec = spectral.eigenvalues(build_hopping(p, random_config(p.L, rng)))
    b, db = 2.0, 1e-5
    num = (spectral.fermion_energy(spec, b + db) - spectral.fermion_energy(spec, b - db)) / (2 * db)
    ana = spectral.denergy_dbeta(spec, b)
    return Check("dE_f/dbeta == finite difference", abs(num - ana) < 1e-6, f"abs diff {abs(num - ana):.2e}")


def check_ising(max_L: int, rng) -> Check:
    p = ModelParams(L=max_L, U_re=0.0, J=0.3, beta=2.0)
    res = exact.exact_observables(p)
    free = exact.exact_observables(p.replace(J=0.0))
    e_ising = oracles.ising_chain_energy(p.L, p.beta, p.J, True)[0]
    diff = abs((res.energy - free.energy) - e_ising)
    return Check("U=0 reduces to the Ising ring", diff < 1e-10, f"abs diff {diff:.2e}")


def check_meanfield(max_L: int, rng) -> Check:
    p = ModelParams(L=256, U_re=0.6, J=0.05, beta=10.0)
    odd = max(abs(meanfield.mf_field(m, p) + meanfield.mf_field(-m, p)) for m in (0.1, 0.5, 0.9))
    sols = [s for s in meanfield.solve_selfconsistent(p) if s.converged]
    res = max(meanfield.fixed_point_residual(s, p) for s in sols)
    paired = all(any(abs(s.m + o.m) < 1e-6 for o in sols) for s in sols)
    ok = odd == 0.0 and res < 1e-9 and paired
    return Check("mean-field oddness, residual, +-m pairs", ok, f"odd {odd:.1e}, residual {res:.1e}")


CHECKS: list[Callable[[int, np.random.Generator], Check]] = [
    check_exact_vs_brute, check_trace_identity, check_similarity, check_hermiticity, check_correlator,
    check_specific_heat, check_denergy, check_ising, check_meanfield,
]


def run_all(max_L: int = 12, seed: int = 0) -> list[Check]:
    max_L = max(6, min(int(max_L), 12))
    rng = np.random.default_rng(seed)
    out = []
    for fn in CHECKS:
        try:
            out.append(fn(max_L, rng))
        except Exception as exc:  # report, never abort the suite
            out.append(Check(fn.__name__.removeprefix("check_"), False, f"{type(exc).__name__}: {exc}"))
    return out
