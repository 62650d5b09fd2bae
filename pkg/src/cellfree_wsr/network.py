"""Network topology, Rayleigh channels with distance pathloss, and noise calibration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, PreconditionError, StateError

NOISE_MODES = ("serving", "per-ap")


def _as_tuple(value, n, cast):
    if np.isscalar(value):
        return tuple(cast(value) for _ in range(n))
    out = tuple(cast(v) for v in value)
    if len(out) != n:
        raise PreconditionError(f"expected {n} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class NetworkConfig:
    """Scenario parameters.

    Scalars given for the per-AP / per-UE fields are broadcast. Defaults follow
    the reference setup: 4 APs with 64 antennas, 8 UEs with 4 antennas, clusters
    of 2 nearest APs, 1 W per AP, unit weights.
    """

    num_aps: int = 4
    num_ues: int = 8
    tx_antennas: Sequence[int] | int = 64
    rx_antennas: Sequence[int] | int = 4
    cluster_size: int = 2
    power_budget: Sequence[float] | float = 1.0
    rate_weights: Sequence[float] | float = 1.0
    snr_db: float = 0.0
    rng_seed: int = 0
    distance_range: tuple[float, float] = (0.1, 0.3)
    noise_mode: str = "serving"

    def __post_init__(self):
        I, K = int(self.num_aps), int(self.num_ues)
        if I < 1 or K < 1:
            raise PreconditionError("num_aps and num_ues must be positive")
        object.__setattr__(self, "tx_antennas", _as_tuple(self.tx_antennas, I, int))
        object.__setattr__(self, "rx_antennas", _as_tuple(self.rx_antennas, K, int))
        object.__setattr__(self, "power_budget", _as_tuple(self.power_budget, I, float))
        object.__setattr__(self, "rate_weights", _as_tuple(self.rate_weights, K, float))
        object.__setattr__(self, "distance_range", tuple(float(d) for d in self.distance_range))
        if not 1 <= self.cluster_size <= I:
            raise PreconditionError("cluster_size must satisfy 1 <= L <= num_aps")
        if min(self.tx_antennas) < 1 or min(self.rx_antennas) < 1:
            raise PreconditionError("antenna counts must be >= 1")
        if min(self.power_budget) <= 0 or min(self.rate_weights) <= 0:
            raise PreconditionError("power budgets and rate weights must be positive")
        lo, hi = self.distance_range
        if not 0 < lo <= hi:
            raise PreconditionError("distance_range must satisfy 0 < d_lo <= d_hi")
        if self.rng_seed < 0:
            raise PreconditionError("rng_seed must be unsigned")
        if self.noise_mode not in NOISE_MODES:
            raise PreconditionError(f"noise_mode must be one of {NOISE_MODES}")

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.rate_weights, dtype=float)

    @property
    def budgets(self) -> np.ndarray:
        return np.asarray(self.power_budget, dtype=float)

    def with_(self, **changes) -> "NetworkConfig":
        """Copy with ``changes``; uniform per-AP / per-UE fields follow a new count."""
        per = {"num_aps": ("tx_antennas", "power_budget"), "num_ues": ("rx_antennas", "rate_weights")}
        for count, names in per.items():
            if count not in changes or changes[count] == getattr(self, count):
                continue
            for name in names:
                values = getattr(self, name)
                if name not in changes and len(set(values)) == 1:
                    changes[name] = values[0]
        return replace(self, **changes)


def make_rng(seed: int) -> np.random.Generator:
    """The package-wide generator: numpy PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


def pathloss_db(d):
    """Large-scale loss ``128.1 + 37.6 log10(d)`` dB for distance ``d`` in km."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("distance must be positive")
    out = 128.1 + 37.6 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def nearest_serving_sets(distances: np.ndarray, cluster_size: int) -> tuple[tuple[int, ...], ...]:
    """The ``cluster_size`` nearest APs per UE (ties to the lower AP index), ascending."""
    distances = np.asarray(distances, dtype=float)
    sets = []
    for k in range(distances.shape[1]):
        order = np.argsort(distances[:, k], kind="stable")[:cluster_size]
        sets.append(tuple(sorted(int(i) for i in order)))
    return tuple(sets)


def served_sets_from(serving_sets, num_aps: int) -> tuple[tuple[int, ...], ...]:
    served = [[] for _ in range(num_aps)]
    for k, aps in enumerate(serving_sets):
        for i in aps:
            served[i].append(k)
    return tuple(tuple(u) for u in served)


@dataclass(frozen=True, eq=False)
class Topology:
    distances: np.ndarray
    serving_sets: tuple[tuple[int, ...], ...]
    served_sets: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        d = np.array(self.distances, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)
        sets = tuple(tuple(sorted(int(i) for i in s)) for s in self.serving_sets)
        object.__setattr__(self, "serving_sets", sets)
        object.__setattr__(self, "served_sets", served_sets_from(sets, d.shape[0]))

    @classmethod
    def from_distances(cls, distances, cluster_size: int) -> "Topology":
        distances = np.asarray(distances, dtype=float)
        return cls(distances, nearest_serving_sets(distances, cluster_size))

    @property
    def num_aps(self) -> int:
        return self.distances.shape[0]

    @property
    def num_ues(self) -> int:
        return self.distances.shape[1]


def place_network(config: NetworkConfig, rng: np.random.Generator) -> Topology:
    """Draw i.i.d. uniform AP-UE distances and pick the L nearest APs per UE."""
    lo, hi = config.distance_range
    d = rng.uniform(lo, hi, size=(config.num_aps, config.num_ues))
    return Topology.from_distances(d, config.cluster_size)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class ChannelSet:
    """All AP-UE channel matrices with the concatenations the solvers need.

    ``link(i, k)`` is ``H_{i,k}`` (``N_k x M_i``). For every AP the all-UE
    stack ``hbar(i)`` (``sum N x M_i``) and its Gram ``gram(i)`` are cached,
    as is the per-UE serving concatenation ``h_serving(k)``.
    Instances are immutable; ``with_noise`` and ``with_serving`` return copies.
    """

    def __init__(self, links, serving_sets, noise_powers=None, distances=None):
        self._links = tuple(tuple(_frozen(np.array(h, dtype=complex)) for h in row) for row in links)
        I = len(self._links)
        K = len(self._links[0])
        if any(len(row) != K for row in self._links):
            raise PreconditionError("ragged channel table")
        self.tx_antennas = tuple(self._links[i][0].shape[1] for i in range(I))
        self.rx_antennas = tuple(self._links[0][k].shape[0] for k in range(K))
        for i in range(I):
            for k in range(K):
                if self._links[i][k].shape != (self.rx_antennas[k], self.tx_antennas[i]):
                    raise PreconditionError(f"channel ({i},{k}) has inconsistent shape")
        sets = tuple(tuple(sorted(int(i) for i in s)) for s in serving_sets)
        if len(sets) != K or any(not s or s[0] < 0 or s[-1] >= I for s in sets):
            raise PreconditionError("serving sets must be non-empty AP index lists, one per UE")
        self.serving_sets = sets
        self.served_sets = served_sets_from(sets, I)
        self.distances = None if distances is None else _frozen(np.array(distances, dtype=float))
        if noise_powers is None:
            self._noise = None
        else:
            noise = np.broadcast_to(np.asarray(noise_powers, dtype=float), (K,)).copy()
            if np.any(~np.isfinite(noise)) or np.any(noise <= 0):
                raise PreconditionError("noise powers must be positive")
            self._noise = _frozen(noise)
        offsets = np.concatenate([[0], np.cumsum(self.rx_antennas)])
        self.row_offsets = tuple(int(o) for o in offsets)
        self._hbar = tuple(_frozen(np.vstack(self._links[i])) for i in range(I))
        grams = []
        for hb in self._hbar:
            g = hb @ hb.conj().T
            grams.append(_frozen(0.5 * (g + g.conj().T)))
        self._gram = tuple(grams)
        self._h_serving = tuple(
            _frozen(np.hstack([self._links[i][k] for i in sets[k]])) for k in range(K)
        )

    @property
    def num_aps(self) -> int:
        return len(self._links)

    @property
    def num_ues(self) -> int:
        return len(self._links[0])

    @property
    def total_rx(self) -> int:
        return self.row_offsets[-1]

    def rows(self, k: int) -> slice:
        """Row slice of UE ``k`` inside an all-UE stack."""
        return slice(self.row_offsets[k], self.row_offsets[k + 1])

    def link(self, i: int, k: int) -> np.ndarray:
        return self._links[i][k]

    def hbar(self, i: int) -> np.ndarray:
        return self._hbar[i]

    def gram(self, i: int) -> np.ndarray:
        return self._gram[i]

    def h_serving(self, k: int) -> np.ndarray:
        return self._h_serving[k]

    def serving_antennas(self, k: int) -> int:
        return sum(self.tx_antennas[i] for i in self.serving_sets[k])

    @property
    def has_noise(self) -> bool:
        return self._noise is not None

    @property
    def noise_powers(self) -> np.ndarray:
        if self._noise is None:
            raise StateError("noise powers are unset; call noise_power() and with_noise()")
        return self._noise

    def with_noise(self, noise_powers) -> "ChannelSet":
        return ChannelSet(self._links, self.serving_sets, noise_powers, self.distances)

    def with_serving(self, serving_sets) -> "ChannelSet":
        return ChannelSet(self._links, serving_sets, self._noise, self.distances)

    def scaled(self, c: float) -> "ChannelSet":
        links = [[c * h for h in row] for row in self._links]
        return ChannelSet(links, self.serving_sets, None, self.distances)


def draw_channels(topology: Topology, config: NetworkConfig, rng: np.random.Generator) -> ChannelSet:
    """Rayleigh channels scaled by the distance pathloss amplitude.

    Entries are drawn pair by pair in (AP ascending, UE ascending) order as
    ``(x + jy)/sqrt(2)`` with ``x, y`` standard normal, row-major.
    """
    I, K = config.num_aps, config.num_ues
    if topology.distances.shape != (I, K):
        raise PreconditionError("topology does not match config dimensions")
    gain = 10.0 ** (-pathloss_db(topology.distances) / 20.0)
    links = []
    for i in range(I):
        row = []
        for k in range(K):
            x = rng.standard_normal((config.rx_antennas[k], config.tx_antennas[i], 2))
            w = (x[..., 0] + 1j * x[..., 1]) / np.sqrt(2.0)
            row.append(gain[i, k] * w)
        links.append(row)
    return ChannelSet(links, topology.serving_sets, distances=topology.distances)


def noise_power(channels: ChannelSet, snr_db: float, mode: str = "serving") -> np.ndarray:
    """Common per-UE noise power fixing the average receive SNR without beamforming.

    ``mode="serving"`` normalises ``||H_k||_F^2`` by ``N_k`` times the total
    serving antenna count; ``mode="per-ap"`` normalises by ``N_k`` times the
    mean per-AP antenna count of the serving set.
    """
    if mode not in NOISE_MODES:
        raise PreconditionError(f"unknown noise mode {mode!r}")
    logs = []
    for k in range(channels.num_ues):
        energy = float(np.sum(np.abs(channels.h_serving(k)) ** 2))
        if energy <= 0:
            raise DomainError(f"UE {k} has an all-zero serving channel")
        antennas = channels.serving_antennas(k)
        if mode == "per-ap":
            antennas = antennas / len(channels.serving_sets[k])
        logs.append(np.log10(energy / (channels.rx_antennas[k] * antennas)))
    sigma2 = 10.0 ** np.mean(logs) * 10.0 ** (-snr_db / 10.0)
    return np.full(channels.num_ues, sigma2)


def generate(config: NetworkConfig, seed: Optional[int] = None) -> ChannelSet:
    """Topology, channels, and noise for one realisation of ``config``."""
    rng = make_rng(config.rng_seed if seed is None else seed)
    topology = place_network(config, rng)
    channels = draw_channels(topology, config, rng)
    return channels.with_noise(noise_power(channels, config.snr_db, config.noise_mode))
