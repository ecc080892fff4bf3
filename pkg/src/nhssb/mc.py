"""Metropolis sampling of bond configurations with the fermion-trace weight.

The weight ``exp(-beta E_J(X)) prod_n (1 + exp(-beta eps_n(X)))`` is real and
non-negative, so configurations are sampled directly by single-bond flips.
Two evaluation routes exist for the fermion factor:

* table path (``t'=0``): on a ring the weight depends on ``n_minus`` only and
  is read from a table of length ``L+1``; on an open chain it is constant.
  Sweeps then run in a compiled kernel.
* dense path: every proposal recomputes the spectrum of the flipped hopping
  matrix.

A global move ``X -> -X`` (which leaves the weight unchanged) is attempted after
each sweep so that the two symmetry sectors are both visited.  Each sweep also
ends with one extra single-bond proposal with probability 1/2: with flat
weights every proposal is accepted, and a fixed even number of flips per sweep
would otherwise freeze the parity of ``n_minus`` between measurements.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numba
import numpy as np

from . import __version__, exact, spectral, stats
from .errors import ConfigError, SpectralError
from .model import ModelParams, SpinConfig, build_hopping, uniform_config

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1
CACHE_CHECK_EVERY = 1000
CACHE_RTOL = 1e-9
DRIFT_SIGMA = 5.0

# fixed-width little-endian layout of the optional raw sample dump
RAW_DTYPE = np.dtype([
    ("chain", "<u2"),
    ("sweep", "<u8"),
    ("n_minus", "<u4"),
    ("m", "<f8"),
    ("e_j", "<f8"),
    ("e_f", "<f8"),
    ("de_f", "<f8"),
    ("sector", "<i1"),
    ("v_re", "<f8"),
    ("v_im", "<f8"),
])


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run.

    ``full_every`` is the number of scalar measurements between full ones
    (velocity, bond currents, correlation functions); 0 disables them.
    ``fast_path=None`` selects the table path whenever ``t'=0``.
    ``start`` is ``"cold"``, ``"hot"`` or ``"mixed"`` (alternating by chain).
    """

    params: ModelParams
    seed: int = 12345
    n_therm: int = 10_000
    n_sweeps: int = 100_000
    n_chains: int = 8
    measure_every: int = 1
    full_every: int = 100
    fast_path: bool | None = None
    global_flip: bool = True
    start: str = "mixed"
    n_bins: int = 32
    code_version: str = __version__

    def __post_init__(self):
        if not isinstance(self.params, ModelParams):
            object.__setattr__(self, "params", ModelParams.from_dict(dict(self.params)))
        for name in ("n_therm", "n_sweeps", "n_chains", "measure_every", "full_every", "n_bins"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ConfigError(f"{name} must be a non-negative integer")
        if self.n_sweeps < 1 or self.n_chains < 1 or self.measure_every < 1 or self.n_bins < 1:
            raise ConfigError("n_sweeps, n_chains, measure_every and n_bins must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        if self.start not in ("cold", "hot", "mixed"):
            raise ConfigError(f"unknown start {self.start!r}")
        if self.fast_path and self.params.t_prime != 0.0:
            raise ConfigError("the table path requires t'=0")

    @property
    def use_table(self) -> bool:
        if self.fast_path is None:
            return self.params.t_prime == 0.0
        return bool(self.fast_path)

    @property
    def n_measurements(self) -> int:
        return self.n_sweeps // self.measure_every

    def replace(self, **changes) -> "RunManifest":
        data = asdict(self)
        data["params"] = changes.pop("params", self.params)
        data.update(changes)
        return RunManifest(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["params"] = self.params.to_dict()
        data["schema"] = MANIFEST_SCHEMA
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        data = dict(data)
        schema = data.pop("schema", MANIFEST_SCHEMA)
        if schema != MANIFEST_SCHEMA:
            raise ConfigError(f"unsupported manifest schema {schema}")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown manifest field(s): {sorted(unknown)}")
        data["params"] = ModelParams.from_dict(data["params"])
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))


@dataclass
class WeightTable:
    """Fermion log-weight, energy and its beta-derivative indexed by ``n_minus``.

    ``velocity`` is ``<v>`` per class on the ring (gauge invariant, so it
    depends on ``n_minus`` only); ``None`` when it must come from a dense solve.
    """

    log_weight: np.ndarray
    energy: np.ndarray
    denergy: np.ndarray
    velocity: np.ndarray | None = None


def weight_table(params: ModelParams) -> WeightTable:
    if params.t_prime != 0.0:
        raise ConfigError("weight table needs t'=0")
    if params.pbc:
        tab = exact.class_table(params, with_velocity=True)
        return WeightTable(tab.log_weight, tab.energy, tab.denergy, tab.velocity)
    spec = spectral.SpectralData(exact.obc_spectrum(params), real_input=params.is_real)
    n = params.L + 1
    return WeightTable(
        np.full(n, spectral.log_weight(spec, params.beta)),
        np.full(n, spectral.fermion_energy(spec, params.beta)),
        np.full(n, spectral.denergy_dbeta(spec, params.beta)),
    )


@dataclass
class ChainState:
    """Mutable state of one Markov chain.

    ``x`` is the working configuration; ``cached_spectrum`` is only kept on the
    dense path.
    """

    x: np.ndarray
    n_minus: int
    bond_sum: int
    cached_log_weight: float
    rng: np.random.Generator
    cached_spectrum: spectral.SpectralData | None = None
    step_count: int = 0
    accepted: int = 0
    proposed: int = 0
    aborted: int = 0

    @property
    def config(self) -> SpinConfig:
        return SpinConfig(self.x.copy())

    @property
    def rng_state(self) -> dict:
        return self.rng.bit_generator.state


def _bond_sum(x: np.ndarray, pbc: bool) -> int:
    x = x.astype(np.int64)
    s = int(np.dot(x[:-1], x[1:]))
    return s + int(x[-1] * x[0]) if pbc else s


def dense_log_weight(params: ModelParams, x: np.ndarray) -> tuple[float, spectral.SpectralData]:
    spec = spectral.eigenvalues(build_hopping(params, SpinConfig(x)))
    return spectral.log_weight(spec, params.beta), spec


def init_state(params: ModelParams, rng: np.random.Generator, start: str = "cold",
               table: WeightTable | None = None) -> ChainState:
    L = params.L
    if start == "cold":
        x = uniform_config(L).x.copy()
    elif start == "hot":
        x = rng.choice(np.array([-1, 1], dtype=np.int8), size=L)
    else:
        raise ConfigError(f"unknown start {start!r}")
    x = np.ascontiguousarray(x, dtype=np.int8)
    n = int(np.count_nonzero(x == -1))
    if table is not None:
        lw, spec = float(table.log_weight[n]), None
    else:
        lw, spec = dense_log_weight(params, x)
    return ChainState(x, n, _bond_sum(x, params.pbc), lw, rng, spec)


@numba.njit(cache=True)
def _table_sweeps(x, n, bsum, lw_table, beta, J, pbc, bonds, uniforms, flip_u, extra_u,
                  measure_every, rec_n, rec_b):
    """Run ``bonds.shape[0]`` sweeps on the table path, recording ``(n, bsum)``
    after every ``measure_every``-th sweep.

    Returns ``(n, bsum, accepted, proposed)``."""
    L = x.shape[0]
    acc = 0
    prop = 0
    k = 0
    for s in range(bonds.shape[0]):
        steps = L + 1 if extra_u[s] < 0.5 else L
        prop += steps
        for step in range(steps):
            i = bonds[s, step]
            xi = x[i]
            if pbc:
                nb = x[i - 1] + x[(i + 1) % L]
            else:
                nb = 0
                if i > 0:
                    nb += x[i - 1]
                if i < L - 1:
                    nb += x[i + 1]
            dbond = -2 * xi * nb
            dn = 1 if xi == 1 else -1
            new_lw = lw_table[n + dn]
            if new_lw == -np.inf:
                continue
            dlog = new_lw - lw_table[n] + beta * J * dbond
            if dlog >= 0.0 or uniforms[s, step] < math.exp(dlog):
                x[i] = -xi
                n += dn
                bsum += dbond
                acc += 1
        if flip_u[s] < 0.5:
            for i in range(L):
                x[i] = -x[i]
            n = L - n
        if (s + 1) % measure_every == 0:
            rec_n[k] = n
            rec_b[k] = bsum
            k += 1
    return n, bsum, acc, prop


def _draw(rng: np.random.Generator, n_sweeps: int, L: int, global_flip: bool):
    """Random numbers for ``n_sweeps`` sweeps; column ``L`` of ``bonds`` and
    ``uniforms`` serves the optional extra proposal."""
    bonds = rng.integers(0, L, size=(n_sweeps, L + 1))
    uniforms = rng.random((n_sweeps, L + 1))
    flip_u = rng.random(n_sweeps) if global_flip else np.ones(n_sweeps)
    extra_u = rng.random(n_sweeps)
    return bonds, uniforms, flip_u, extra_u


def _dense_sweeps(state: ChainState, params: ModelParams, bonds, uniforms, flip_u, extra_u,
                  measure_every: int, rec_n, rec_b, rec_e=None, rec_d=None) -> tuple[int, int]:
    L, beta, J = params.L, params.beta, params.J
    pbc = params.pbc
    x = state.x
    h = build_hopping(params, SpinConfig(x)).entries.copy()
    U = params.U if not params.is_real else params.U_re
    acc = 0
    prop = 0
    k = 0
    for s in range(bonds.shape[0]):
        steps = L + 1 if extra_u[s] < 0.5 else L
        prop += steps
        for step in range(steps):
            i = int(bonds[s, step])
            xi = int(x[i])
            if pbc:
                nb = int(x[i - 1]) + int(x[(i + 1) % L])
            else:
                nb = (int(x[i - 1]) if i > 0 else 0) + (int(x[i + 1]) if i < L - 1 else 0)
            dbond = -2 * xi * nb
            active = pbc or i < L - 1
            if active:
                j = (i + 1) % L
                old = h[j, i], h[i, j]
                h[j, i] += -2 * U * xi
                h[i, j] += 2 * U * xi
                try:
                    spec = spectral.eigenvalues(h)
                    new_lw = spectral.log_weight(spec, beta)
                except SpectralError:
                    h[j, i], h[i, j] = old
                    state.aborted += 1
                    continue
            else:
                spec, new_lw = state.cached_spectrum, state.cached_log_weight
            accept = new_lw != -np.inf
            if accept:
                dlog = new_lw - state.cached_log_weight + beta * J * dbond
                accept = dlog >= 0.0 or uniforms[s, step] < math.exp(dlog)
            if accept:
                x[i] = -xi
                state.n_minus += 1 if xi == 1 else -1
                state.bond_sum += dbond
                state.cached_log_weight = new_lw
                state.cached_spectrum = spec
                acc += 1
            elif active:
                h[j, i], h[i, j] = old
        if flip_u[s] < 0.5:
            # h(-X) = h(X)^T has the same spectrum
            x *= -1
            h = h.T.copy()
            state.n_minus = L - state.n_minus
        if (s + 1) % measure_every == 0:
            rec_n[k] = state.n_minus
            rec_b[k] = state.bond_sum
            if rec_e is not None:
                rec_e[k] = spectral.fermion_energy(state.cached_spectrum, beta)
                rec_d[k] = spectral.denergy_dbeta(state.cached_spectrum, beta)
            k += 1
    return acc, prop


def run_sweeps(state: ChainState, params: ModelParams, n_sweeps: int, table: WeightTable | None,
               global_flip: bool = True, measure_every: int | None = None):
    """Advance ``state`` by ``n_sweeps`` sweeps.

    Returns per-measurement arrays ``(n_minus, bond_sum, E_f, dE_f/dbeta, v)``;
    ``v`` is NaN when no velocity table is available.
    """
    L = params.L
    every = n_sweeps if measure_every is None else measure_every
    n_rec = n_sweeps // every
    rec_n = np.zeros(n_rec, np.int64)
    rec_b = np.zeros(n_rec, np.int64)
    bonds, uniforms, flip_u, extra_u = _draw(state.rng, n_sweeps, L, global_flip)
    if table is not None:
        n, b, acc, prop = _table_sweeps(state.x, state.n_minus, state.bond_sum, table.log_weight,
                                        params.beta, params.J, params.pbc, bonds, uniforms, flip_u,
                                        extra_u, every, rec_n, rec_b)
        state.n_minus, state.bond_sum = int(n), int(b)
        state.cached_log_weight = float(table.log_weight[state.n_minus])
        rec_e = table.energy[rec_n]
        rec_d = table.denergy[rec_n]
        rec_v = table.velocity[rec_n] if table.velocity is not None else np.full(n_rec, np.nan, complex)
    else:
        rec_v = np.full(n_rec, np.nan, complex)
        rec_e = np.zeros(n_rec)
        rec_d = np.zeros(n_rec)
        acc, prop = _dense_sweeps(state, params, bonds, uniforms, flip_u, extra_u, every,
                                  rec_n, rec_b, rec_e, rec_d)
    state.accepted += int(acc)
    state.proposed += int(prop)
    state.step_count += n_sweeps
    return rec_n, rec_b, rec_e, rec_d, rec_v


def metropolis_sweep(state: ChainState, params: ModelParams, table: WeightTable | None = None,
                     global_flip: bool = True) -> ChainState:
    """One sweep: ``L`` single-bond proposals, the optional extra proposal and
    the global flip move."""
    run_sweeps(state, params, 1, table, global_flip)
    return state


def check_cache(state: ChainState, params: ModelParams, table: WeightTable | None) -> float:
    """Relative disagreement between the cached and a fresh log-weight."""
    if table is not None:
        fresh = float(table.log_weight[int(np.count_nonzero(state.x == -1))])
        ref = state.cached_log_weight
        if params.pbc and params.L <= 128:
            # independent dense evaluation of the same configuration
            ref = spectral.config_log_weight(params, SpinConfig(state.x))
    else:
        fresh, spec = dense_log_weight(params, state.x)
        ref = state.cached_log_weight
    if fresh == ref:
        return 0.0
    if not (np.isfinite(fresh) and np.isfinite(ref)):
        return float("inf")
    return abs(fresh - ref) / max(1.0, abs(fresh))


# -- measurement -------------------------------------------------------------

@dataclass
class SampleRecord:
    """One measurement.  ``v`` and the correlation arrays are NaN / None on
    scalar-only measurements."""

    m: float
    abs_m: float
    E_J: float
    E_f: float
    dEf_dbeta: float
    v: complex
    sector: int
    corr_X: np.ndarray | None = None
    corr_v: np.ndarray | None = None
    n_minus: int = 0


def ring_correlation(a: np.ndarray, b: np.ndarray | None = None, pbc: bool = True) -> np.ndarray:
    """``C(r) = mean_i a_i b_{i+r}`` for ``r = 0..L//2`` (translation-averaged)."""
    a = np.asarray(a, float)
    b = a if b is None else np.asarray(b, float)
    L = a.size
    out = np.empty(L // 2 + 1)
    for r in range(L // 2 + 1):
        if pbc:
            out[r] = np.dot(a, np.roll(b, -r)) / L
        else:
            out[r] = np.dot(a[: L - r], b[r:]) / (L - r)
    return out


def measure(state: ChainState | SpinConfig, params: ModelParams, table: WeightTable | None = None) -> SampleRecord:
    """Full measurement of a configuration."""
    config = state if isinstance(state, SpinConfig) else state.config
    L, beta = params.L, params.beta
    n = config.n_minus
    if table is not None:
        e_f, de_f = float(table.energy[n]), float(table.denergy[n])
    else:
        spec = spectral.config_spectrum(params, config)
        e_f, de_f = spectral.fermion_energy(spec, beta), spectral.denergy_dbeta(spec, beta)
    G = spectral.thermal_correlation(params, config)
    j = spectral.bond_currents(params, config, G)
    v = complex(np.sum(j))
    m = config.magnetization
    e_j = -params.J * _bond_sum(config.x, params.pbc)
    return SampleRecord(
        m=m, abs_m=abs(m), E_J=e_j, E_f=e_f, dEf_dbeta=de_f, v=v,
        sector=spectral.sector_of(m, v.imag, L),
        corr_X=ring_correlation(config.x, pbc=params.pbc),
        corr_v=ring_correlation(j.imag, pbc=params.pbc),
        n_minus=n,
    )


@dataclass
class Samples:
    """Columnar measurement stream of one chain.

    Scalar columns have one entry per measurement; ``v`` is NaN where it was
    not evaluated.  ``full_index`` points at the measurements that also carry
    correlations; ``corr_x``, ``corr_v`` and ``mean_im_j`` are indexed like it.
    """

    L: int
    n_minus: np.ndarray
    e_j: np.ndarray
    e_f: np.ndarray
    de_f: np.ndarray
    sector: np.ndarray
    full_index: np.ndarray
    v: np.ndarray
    corr_x: np.ndarray
    corr_v: np.ndarray
    mean_im_j: np.ndarray

    @property
    def m(self) -> np.ndarray:
        return (self.L - 2 * self.n_minus) / self.L

    @property
    def e_tot(self) -> np.ndarray:
        return self.e_j + self.e_f

    def __len__(self) -> int:
        return self.n_minus.size

    def records(self) -> list[SampleRecord]:
        full = {int(k): i for i, k in enumerate(self.full_index)}
        out = []
        m = self.m
        for k in range(len(self)):
            i = full.get(k)
            out.append(SampleRecord(
                m=float(m[k]), abs_m=float(abs(m[k])), E_J=float(self.e_j[k]), E_f=float(self.e_f[k]),
                dEf_dbeta=float(self.de_f[k]),
                v=complex(self.v[k]),
                sector=int(self.sector[k]),
                corr_X=self.corr_x[i] if i is not None else None,
                corr_v=self.corr_v[i] if i is not None else None,
                n_minus=int(self.n_minus[k]),
            ))
        return out

    def raw(self, chain: int = 0, measure_every: int = 1) -> np.ndarray:
        out = np.zeros(len(self), RAW_DTYPE)
        out["chain"] = chain
        out["sweep"] = (np.arange(len(self)) + 1) * measure_every
        out["n_minus"] = self.n_minus
        out["m"] = self.m
        out["e_j"] = self.e_j
        out["e_f"] = self.e_f
        out["de_f"] = self.de_f
        out["sector"] = self.sector
        out["v_re"] = self.v.real
        out["v_im"] = self.v.imag
        return out


@dataclass
class ChainResult:
    chain_id: int
    start: str
    samples: Samples
    acceptance: float
    aborted: int
    max_cache_drift: float
    warnings: list[str] = field(default_factory=list)


def _sectors(m: np.ndarray, v: np.ndarray, L: int) -> np.ndarray:
    """Vectorised ``spectral.sector_of``."""
    im = np.nan_to_num(v.imag, nan=0.0)
    by_v = np.where(np.abs(im) > 1e-9 * L, np.sign(im), 1)
    out = np.where(np.abs(m) * L > 1.0 + 1e-9, np.sign(m), by_v)
    return out.astype(np.int8)


def run_single_chain(manifest: RunManifest, chain_id: int) -> ChainResult:
    params = manifest.params
    L = params.L
    seeds = np.random.SeedSequence(int(manifest.seed)).spawn(manifest.n_chains)
    rng = np.random.default_rng(seeds[chain_id])
    start = manifest.start if manifest.start != "mixed" else ("cold" if chain_id % 2 == 0 else "hot")
    table = weight_table(params) if manifest.use_table else None
    state = init_state(params, rng, start, table)
    warnings: list[str] = []
    max_drift = 0.0

    next_check = CACHE_CHECK_EVERY

    def advance(n_sweeps, every):
        """Run ``n_sweeps`` sweeps (a multiple of ``every``) in chunks aligned
        with the measurement cadence, checking the cache about every
        ``CACHE_CHECK_EVERY`` sweeps."""
        nonlocal max_drift, next_check
        done = 0
        chunks = []
        while done < n_sweeps:
            unit = every or 1
            size = max(unit, -(-(next_check - state.step_count) // unit) * unit)
            size = min(size, n_sweeps - done)
            out = run_sweeps(state, params, size, table, manifest.global_flip, every or size)
            if every:
                chunks.append(out)
            done += size
            if state.step_count >= next_check:
                while next_check <= state.step_count:
                    next_check += CACHE_CHECK_EVERY
                drift = check_cache(state, params, table)
                max_drift = max(max_drift, drift)
                if drift > CACHE_RTOL:
                    msg = f"chain {chain_id}: cached log-weight drift {drift:.2e} at sweep {state.step_count}"
                    warnings.append(msg)
                    logger.warning(msg)
                    if table is None:
                        state.cached_log_weight, state.cached_spectrum = dense_log_weight(params, state.x)
        return [np.concatenate(c) for c in zip(*chunks)] if chunks else [np.zeros(0)] * 5

    # thermalization in chunks that respect the cache-check cadence
    if manifest.n_therm:
        advance(manifest.n_therm, None)
    state.accepted = state.proposed = 0

    every = manifest.measure_every
    n_meas = manifest.n_measurements
    full_stride = manifest.full_every
    block_meas = full_stride if full_stride > 0 else n_meas
    cols = [[], [], [], [], []]
    full_index, full_v, cxs, cvs, mij = [], [], [], [], []
    taken = 0
    while taken < n_meas:
        nb = min(block_meas, n_meas - taken)
        # records are taken at multiples of measure_every within each call
        out = advance(nb * every, every)
        for c, o in zip(cols, out):
            c.append(o)
        taken += nb
        if full_stride > 0 and nb == block_meas:
            try:
                rec = measure(state, params, table)
            except SpectralError as exc:
                state.aborted += 1
                logger.warning("chain %d: measurement failed: %s", chain_id, exc)
                continue
            k = taken - 1
            full_index.append(k)
            full_v.append(rec.v)
            cxs.append(rec.corr_X)
            cvs.append(rec.corr_v)
            mij.append(rec.v.imag / L)
    n_arr, b_arr, e_arr, d_arr, v_arr = (np.concatenate(c) if c else np.zeros(0) for c in cols)
    n_arr = n_arr.astype(np.int64)
    v_arr = v_arr.astype(complex)
    for k, v in zip(full_index, full_v):
        if np.isnan(v_arr[k]):
            v_arr[k] = v
        elif abs(v_arr[k] - v) > 1e-8 * max(1.0, abs(v)):
            msg = f"chain {chain_id}: tabulated <v> {v_arr[k]:.6g} != dense {v:.6g} at sample {k}"
            warnings.append(msg)
            logger.warning(msg)
    m = (L - 2 * n_arr) / L
    sector = _sectors(m, v_arr, L)
    width = L // 2 + 1
    samples = Samples(
        L=L, n_minus=n_arr, e_j=-params.J * b_arr.astype(float), e_f=e_arr.astype(float),
        de_f=d_arr.astype(float), sector=sector,
        full_index=np.asarray(full_index, np.int64), v=v_arr,
        corr_x=np.asarray(cxs, float).reshape(-1, width), corr_v=np.asarray(cvs, float).reshape(-1, width),
        mean_im_j=np.asarray(mij, float),
    )
    acceptance = state.accepted / state.proposed if state.proposed else float("nan")
    return ChainResult(chain_id, start, samples, acceptance, state.aborted, max_drift, warnings)


# -- statistics --------------------------------------------------------------

@dataclass
class RunResult:
    manifest: RunManifest
    chains: list[ChainResult]
    estimates: dict[str, stats.Estimate]
    warnings: list[str]

    @property
    def acceptance(self) -> float:
        return float(np.mean([c.acceptance for c in self.chains]))

    def records(self) -> list[SampleRecord]:
        return [r for c in self.chains for r in c.samples.records()]

    def sidecar(self) -> dict:
        return {
            "manifest": self.manifest.to_dict(),
            "estimates": {k: v.as_dict() for k, v in self.estimates.items()},
            "acceptance": [c.acceptance for c in self.chains],
            "aborted_proposals": [c.aborted for c in self.chains],
            "max_cache_drift": [c.max_cache_drift for c in self.chains],
            "starts": [c.start for c in self.chains],
            "warnings": self.warnings,
        }

    def raw(self) -> np.ndarray:
        return np.concatenate([c.samples.raw(c.chain_id, self.manifest.measure_every) for c in self.chains])


def _cv(params: ModelParams):
    beta2, L = params.beta ** 2, params.L

    def f(e, e2, d):
        return beta2 * (e2 - e * e - d) / L
    return f


def _halves_warning(name: str, series: Sequence[np.ndarray], n_bins: int) -> str | None:
    first = [s[: len(s) // 2] for s in series]
    second = [s[len(s) // 2:] for s in series]
    if min(len(s) for s in first) < 4:
        return None
    a = stats.mean_estimate(first, max(2, n_bins // 2))
    b = stats.mean_estimate(second, max(2, n_bins // 2))
    err = math.hypot(a.err, b.err)
    if not np.isfinite(err):
        return None
    if abs(a.mean - b.mean) > DRIFT_SIGMA * err and abs(a.mean - b.mean) > 1e-12:
        return (f"{name}: first/second half means differ by {abs(a.mean - b.mean) / err:.1f} sigma "
                "(not equilibrated?)")
    return None


def summarize(params: ModelParams, chains: Sequence[ChainResult], n_bins: int = 32) -> tuple[dict, list]:
    """Jackknife estimates over bins pooled across chains."""
    L = params.L
    sam = [c.samples for c in chains]
    est: dict[str, stats.Estimate] = {}
    warnings: list[str] = []
    series = {
        "abs_m": [np.abs(s.m) for s in sam],
        "m": [s.m for s in sam],
        "m2": [s.m ** 2 for s in sam],
        "energy": [s.e_tot / L for s in sam],
    }
    for name, ser in series.items():
        est[name] = stats.mean_estimate(ser, n_bins)
    e = stats.pooled_bins([s.e_tot for s in sam], n_bins)
    e2 = stats.pooled_bins([s.e_tot ** 2 for s in sam], n_bins)
    d = stats.pooled_bins([s.de_f for s in sam], n_bins)
    cv, cv_err = stats.jackknife(_cv(params), e, e2, d)
    est["specific_heat"] = stats.Estimate(cv, cv_err, est["energy"].tau)
    known = [np.isfinite(s.v) for s in sam]
    if all(k.any() for k in known):
        v = [s.v[k] for s, k in zip(sam, known)]
        w = [vi.imag * params.beta / L for vi in v]
        sec = [s.sector[k] for s, k in zip(sam, known)]
        est["winding"] = stats.mean_estimate(w, n_bins)
        est["winding_sector"] = stats.mean_estimate([wi * si for wi, si in zip(w, sec)], n_bins)
        est["im_v"] = stats.mean_estimate([vi.imag for vi in v], n_bins)
        est["re_v"] = stats.mean_estimate([vi.real for vi in v], n_bins)
    est["acceptance"] = stats.Estimate(float(np.mean([c.acceptance for c in chains])), 0.0)
    for name in ("abs_m", "energy"):
        msg = _halves_warning(name, series[name], n_bins)
        if msg:
            warnings.append(msg)
            logger.warning(msg)
    for c in chains:
        warnings.extend(c.warnings)
    return est, warnings


def run_chain(manifest: RunManifest, executor=None) -> RunResult:
    """Run all chains of ``manifest`` and reduce them in chain order.

    ``executor`` is an optional ``concurrent.futures`` executor; results do not
    depend on it.
    """
    ids = range(manifest.n_chains)
    if executor is None:
        chains = [run_single_chain(manifest, i) for i in ids]
    else:
        chains = list(executor.map(run_single_chain, [manifest] * manifest.n_chains, ids))
    return reduce_chains(manifest, chains)


def reduce_chains(manifest: RunManifest, chains: Sequence[ChainResult]) -> RunResult:
    """Deterministic reduction keyed by chain id."""
    chains = sorted(chains, key=lambda c: c.chain_id)
    est, warnings = summarize(manifest.params, chains, manifest.n_bins)
    return RunResult(manifest, chains, est, warnings)


def binned_table(result: RunResult) -> list[dict]:
    """Per-chain bin means of the scalar observables (one row per bin)."""
    rows = []
    L = result.manifest.params.L
    for c in result.chains:
        s = c.samples
        cols = {
            "abs_m": stats.bin_means(np.abs(s.m), result.manifest.n_bins),
            "m": stats.bin_means(s.m, result.manifest.n_bins),
            "energy": stats.bin_means(s.e_tot / L, result.manifest.n_bins),
            "energy_sq": stats.bin_means((s.e_tot / L) ** 2, result.manifest.n_bins),
            "de_f": stats.bin_means(s.de_f / L, result.manifest.n_bins),
        }
        for b in range(len(cols["m"])):
            rows.append({"chain": c.chain_id, "bin": b, **{k: float(v[b]) for k, v in cols.items()}})
    return rows


def correlation_estimates(result: RunResult) -> dict[str, np.ndarray]:
    """Mean ``C_X(r)`` and connected ``C_v(r)`` with jackknife errors.

    The connected part subtracts the square of the sector-folded mean current
    per bond, since the unsectored mean vanishes by symmetry.
    """
    sam = [c.samples for c in result.chains if len(c.samples.full_index)]
    if not sam:
        return {}
    n_bins = result.manifest.n_bins
    cx = stats.pooled_bins([s.corr_x for s in sam], n_bins)
    cv = stats.pooled_bins([s.corr_v for s in sam], n_bins)
    jm = stats.pooled_bins([s.mean_im_j * s.sector[s.full_index] for s in sam], n_bins)
    out = {}
    width = cx.shape[1]
    cx_mean = np.empty(width)
    cx_err = np.empty(width)
    cv_mean = np.empty(width)
    cv_err = np.empty(width)
    for r in range(width):
        cx_mean[r], cx_err[r] = stats.jackknife(lambda a: a, cx[:, r])
        cv_mean[r], cv_err[r] = stats.jackknife(lambda a, b: a - b * b, cv[:, r], jm)
    out["r"] = np.arange(width)
    out["corr_x"], out["corr_x_err"] = cx_mean, cx_err
    out["corr_v"], out["corr_v_err"] = cv_mean, cv_err
    return out
