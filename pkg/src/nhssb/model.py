"""Model parameters, bond-spin configurations and the single-particle hopping matrix.

Sites are labelled ``0 .. L-1`` and bond ``i`` joins sites ``i`` and ``i+1``
(mod ``L``).  The bond variable ``X_i = +1/-1`` sits on bond ``i``.  For a given
configuration the fermions see the quadratic Hamiltonian
``H(X) = sum_ab c^dag_a h_ab c_b`` with

    h[i+1, i] = t + U X_i        (hop to the right across bond i)
    h[i, i+1] = t - U X_i        (hop to the left across bond i)
    h[i+2, i] = h[i, i+2] = t'

Under open boundaries the wrap-around bond ``L-1`` and the ``t'`` hops across
the edge are absent; ``X_{L-1}`` is still part of the configuration (so that the
configuration space does not depend on the boundary condition) but does not
enter the hopping matrix.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError


class BC(str, enum.Enum):
    PBC = "PBC"
    OBC = "OBC"


@dataclass(frozen=True)
class ModelParams:
    """Couplings, lattice size, inverse temperature and boundary condition.

    ``U`` is stored as ``(U_re, U_im)``; only purely real or purely imaginary
    couplings are allowed (the imaginary one is the Hermitian control).
    """

    t: float = 1.0
    t_prime: float = 0.0
    U_re: float = 0.4
    U_im: float = 0.0
    J: float = 0.0
    L: int = 16
    beta: float = 1.0
    bc: BC = BC.PBC

    def __post_init__(self):
        object.__setattr__(self, "bc", BC(self.bc))
        if int(self.L) != self.L or self.L < 3:
            raise ConfigError(f"L must be an integer >= 3, got {self.L!r}")
        object.__setattr__(self, "L", int(self.L))
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta!r}")
        if self.U_im != 0 and self.U_re != 0:
            raise ConfigError("U must be purely real or purely imaginary")
        for name in ("t", "t_prime", "U_re", "U_im", "J", "beta"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, value)

    @property
    def U(self) -> complex:
        return complex(self.U_re, self.U_im)

    @property
    def is_real(self) -> bool:
        """True when the hopping matrix has real entries."""
        return self.U_im == 0.0

    @property
    def pbc(self) -> bool:
        return self.bc is BC.PBC

    def replace(self, **changes) -> "ModelParams":
        data = self.to_dict()
        data.update(changes)
        return ModelParams.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["bc"] = self.bc.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model parameter(s): {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SpinConfig:
    """Ring of bond variables ``X_i = +-1``."""

    x: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.x)
        if x.ndim != 1 or x.size < 1:
            raise ConfigError("configuration must be a non-empty 1D sequence")
        if not np.all((x == 1) | (x == -1)):
            raise ConfigError("bond variables must be +1 or -1")
        x = x.astype(np.int8)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def L(self) -> int:
        return self.x.size

    @property
    def n_minus(self) -> int:
        return int(np.count_nonzero(self.x == -1))

    @property
    def n_walls(self) -> int:
        """Domain walls on the ring (always even)."""
        return self.count_walls(BC.PBC)

    def count_walls(self, bc: BC | str = BC.PBC) -> int:
        x = self.x
        walls = int(np.count_nonzero(x[1:] != x[:-1]))
        if BC(bc) is BC.PBC:
            walls += int(x[0] != x[-1])
        return walls

    @property
    def magnetization(self) -> float:
        return float(self.x.sum()) / self.L

    def flipped(self, i: int | None = None) -> "SpinConfig":
        """Copy with bond ``i`` flipped, or every bond flipped when ``i`` is None."""
        x = -self.x if i is None else self.x.copy()
        if i is not None:
            x[i] = -x[i]
        return SpinConfig(x)

    def __neg__(self) -> "SpinConfig":
        return self.flipped()

    def shifted(self, s: int = 1) -> "SpinConfig":
        return SpinConfig(np.roll(self.x, s))

    def __eq__(self, other):
        return isinstance(other, SpinConfig) and np.array_equal(self.x, other.x)

    def __hash__(self):
        return hash(self.x.tobytes())


@dataclass(frozen=True)
class HoppingMatrix:
    entries: np.ndarray = field(repr=False)
    params: ModelParams
    config: SpinConfig

    @property
    def L(self) -> int:
        return self.entries.shape[0]


def uniform_config(L: int, sign: int = 1) -> SpinConfig:
    if L < 3:
        raise ConfigError("L must be >= 3")
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    return SpinConfig(np.full(L, sign, dtype=np.int8))


def make_domain_wall_pair(L: int, r: int, start: int = 0) -> SpinConfig:
    """Contiguous arc of ``r`` bonds with ``X = -1`` in a ``+1`` background."""
    if not 1 <= r <= L - 1:
        raise ConfigError(f"need 1 <= r <= L-1, got r={r}, L={L}")
    x = np.ones(L, dtype=np.int8)
    x[(start + np.arange(r)) % L] = -1
    return SpinConfig(x)


def random_config(L: int, rng: np.random.Generator, n_minus: int | None = None) -> SpinConfig:
    if n_minus is None:
        return SpinConfig(rng.choice(np.array([-1, 1], dtype=np.int8), size=L))
    x = np.ones(L, dtype=np.int8)
    x[rng.choice(L, size=n_minus, replace=False)] = -1
    return SpinConfig(x)


def hopping_terms(params: ModelParams, config: SpinConfig):
    """All hopping terms ``c^dag_a c_b`` as parallel arrays.

    Returns ``(a, b, amplitude, displacement)`` where ``displacement`` is the
    physical distance travelled by the hop ``b -> a`` (+1 to the right).  Terms
    are listed individually, so on very short rings two terms may land on the
    same matrix element and are meant to be accumulated.
    """
    L = params.L
    if config.L != L:
        raise ConfigError(f"configuration length {config.L} does not match L={L}")
    x = config.x.astype(float)
    U = params.U if not params.is_real else params.U_re
    sites = np.arange(L)
    nbonds = L if params.pbc else L - 1
    i = sites[:nbonds]
    j = (i + 1) % L
    a = [j, i]
    b = [i, j]
    amp = [params.t + U * x[:nbonds], params.t - U * x[:nbonds]]
    disp = [np.ones(nbonds, int), -np.ones(nbonds, int)]
    if params.t_prime != 0.0:
        nnn = L if params.pbc else L - 2
        i2 = sites[:nnn]
        j2 = (i2 + 2) % L
        a += [j2, i2]
        b += [i2, j2]
        amp += [np.full(nnn, params.t_prime), np.full(nnn, params.t_prime)]
        disp += [np.full(nnn, 2), np.full(nnn, -2)]
    return (np.concatenate(a), np.concatenate(b),
            np.concatenate([np.asarray(v) for v in amp]), np.concatenate(disp))


def build_hopping(params: ModelParams, config: SpinConfig) -> HoppingMatrix:
    a, b, amp, _ = hopping_terms(params, config)
    h = np.zeros((params.L, params.L), dtype=float if params.is_real else complex)
    np.add.at(h, (a, b), amp)
    return HoppingMatrix(h, params, config)


def ising_energy(config: SpinConfig, params: ModelParams) -> float:
    """Classical energy ``-J sum_i X_i X_{i+1}`` (ring sum under PBC)."""
    x = config.x.astype(np.int64)
    bonds = int(np.dot(x[:-1], x[1:]))
    if params.pbc:
        bonds += int(x[-1] * x[0])
    return -params.J * bonds
