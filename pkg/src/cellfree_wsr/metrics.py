"""Beamformer containers, interference covariances, rates, power, and fronthaul counts."""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import NumericError, PreconditionError
from .network import ChannelSet

LN2 = np.log(2.0)


class Beamformer:
    """Per-(AP, UE) transmit matrices ``P_{i,k}`` (``M_i x D_{i,k}``).

    Keys are ``(i, k)`` for every serving pair; a pair carrying no streams has
    a zero-column block. Stream counts are read off the block shapes.
    """

    def __init__(self, blocks: Mapping[tuple[int, int], np.ndarray]):
        self.blocks = {(int(i), int(k)): np.asarray(b, dtype=complex) for (i, k), b in blocks.items()}

    def __getitem__(self, key):
        return self.blocks[key]

    def __iter__(self):
        return iter(sorted(self.blocks))

    def __len__(self):
        return len(self.blocks)

    def stream_counts(self, num_aps: int, num_ues: int) -> np.ndarray:
        D = np.zeros((num_aps, num_ues), dtype=int)
        for (i, k), b in self.blocks.items():
            D[i, k] = b.shape[1]
        return D

    def ap_matrix(self, i: int, served) -> np.ndarray:
        """Horizontal stack of AP ``i``'s blocks over ``served`` UEs."""
        parts = [self.blocks[(i, k)] for k in served]
        return np.hstack(parts) if parts else np.zeros((0, 0), dtype=complex)

    def copy(self):
        return type(self)({key: b.copy() for key, b in self.blocks.items()})

    def scaled(self, c: float):
        return type(self)({key: c * b for key, b in self.blocks.items()})

    def __repr__(self):
        return f"{type(self).__name__}({len(self.blocks)} blocks)"


class StreamLayout:
    """Column bookkeeping for a fixed stream assignment.

    For AP ``i`` the per-AP stack has one column block per served UE, in
    ascending UE order. For UE ``k`` the stacked stream index lists its
    serving APs in ascending order with cumulative offsets, which is how the
    per-AP stream selector is realised (slicing, never an explicit matrix).
    """

    def __init__(self, channels: ChannelSet, stream_counts: np.ndarray):
        D = np.asarray(stream_counts, dtype=int)
        I, K = channels.num_aps, channels.num_ues
        if D.shape != (I, K):
            raise PreconditionError("stream counts must be an I x K array")
        self.counts = D
        self.served = channels.served_sets
        self.serving = channels.serving_sets
        self.ap_cols: list[dict[int, slice]] = []
        self.ap_width: list[int] = []
        self.ap_other: list[dict[int, np.ndarray]] = []
        for i in range(I):
            cols, start = {}, 0
            for k in self.served[i]:
                cols[k] = slice(start, start + D[i, k])
                start += D[i, k]
            self.ap_cols.append(cols)
            self.ap_width.append(start)
            other = {}
            for k in range(K):
                mask = np.ones(start, dtype=bool)
                if k in cols:
                    mask[cols[k]] = False
                other[k] = np.flatnonzero(mask)
            self.ap_other.append(other)
        self.ue_cols: list[dict[int, slice]] = []
        self.ue_width: list[int] = []
        for k in range(K):
            cols, start = {}, 0
            for i in self.serving[k]:
                cols[i] = slice(start, start + D[i, k])
                start += D[i, k]
            self.ue_cols.append(cols)
            self.ue_width.append(start)

    @classmethod
    def of(cls, channels: ChannelSet, bf: Beamformer) -> "StreamLayout":
        expected = {(i, k) for k, aps in enumerate(channels.serving_sets) for i in aps}
        if set(bf.blocks) != expected:
            raise PreconditionError("beamformer keys must be exactly the serving pairs")
        return cls(channels, bf.stream_counts(channels.num_aps, channels.num_ues))


class LinkStats:
    """Useful-signal matrices ``S_k = H_k P_k`` and covariances ``N_k``.

    Built from per-AP effective links ``F_i`` whose row block ``k`` holds
    ``H_{i,k} P_i`` (``sum N x sum_k D_{i,k}``). ``F_i = Hbar_i P_i`` for full
    beamformers and ``F_i = G_i X_i`` for low-dimension substitutions.
    """

    def __init__(self, channels: ChannelSet, layout: StreamLayout, effective: list[np.ndarray]):
        noise = channels.noise_powers
        self.signal: list[np.ndarray] = []
        self.cov: list[np.ndarray] = []
        for k in range(channels.num_ues):
            rows = channels.rows(k)
            n = channels.rx_antennas[k]
            cov = noise[k] * np.eye(n, dtype=complex)
            parts = []
            for i, F in enumerate(effective):
                Fk = F[rows]
                cols = layout.ap_cols[i].get(k)
                if cols is not None:
                    parts.append(Fk[:, cols])
                other = layout.ap_other[i][k]
                if other.size:
                    J = Fk[:, other]
                    cov += J @ J.conj().T
            S = np.hstack(parts) if parts else np.zeros((n, 0), dtype=complex)
            self.signal.append(S)
            self.cov.append(0.5 * (cov + cov.conj().T))

    def rates_nats(self) -> np.ndarray:
        out = np.empty(len(self.signal))
        for k, (S, N) in enumerate(zip(self.signal, self.cov)):
            if S.shape[1] == 0:
                out[k] = 0.0
                continue
            total = N + S @ S.conj().T
            out[k] = _logdet_pd(total) - _logdet_pd(N)
        return out


def _logdet_pd(a: np.ndarray) -> float:
    try:
        c = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError("covariance is not positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(c)).real)))


def full_effective(channels: ChannelSet, layout: StreamLayout, bf: Beamformer) -> list[np.ndarray]:
    return [channels.hbar(i) @ bf.ap_matrix(i, layout.served[i]) if layout.ap_width[i]
            else np.zeros((channels.total_rx, 0), dtype=complex)
            for i in range(channels.num_aps)]


def link_stats(channels: ChannelSet, bf: Beamformer) -> LinkStats:
    layout = StreamLayout.of(channels, bf)
    return LinkStats(channels, layout, full_effective(channels, layout, bf))


def interference_plus_noise(k: int, channels: ChannelSet, bf: Beamformer) -> np.ndarray:
    """Covariance of inter-user interference plus noise at UE ``k``."""
    return link_stats(channels, bf).cov[k]


def ue_rate(k: int, channels: ChannelSet, bf: Beamformer) -> float:
    """Achievable rate of UE ``k`` in bits/s/Hz."""
    return float(link_stats(channels, bf).rates_nats()[k] / LN2)


def ue_rates(channels: ChannelSet, bf: Beamformer) -> np.ndarray:
    return link_stats(channels, bf).rates_nats() / LN2


def weighted_sum_rate(channels: ChannelSet, bf: Beamformer, weights) -> float:
    """Weighted sum of per-UE rates in bits/s/Hz."""
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (channels.num_ues,))
    return float(weights @ ue_rates(channels, bf))


def ap_power(i: int, bf: Beamformer) -> float:
    """Transmit power of AP ``i``: summed squared Frobenius norms of its blocks."""
    return float(sum(np.vdot(b, b).real for (j, _), b in bf.blocks.items() if j == i))


def ap_powers(channels: ChannelSet, bf: Beamformer) -> np.ndarray:
    out = np.zeros(channels.num_aps)
    for (i, _), b in bf.blocks.items():
        out[i] += np.vdot(b, b).real
    return out


INTERACTION_ALGOS = ("local-ezf", "wmmse", "rwmmse")


def interaction_count(algo: str, rx_antennas, tx_antennas, served_streams) -> list[Fraction]:
    """Complex scalars exchanged between each AP and the CUs for one solve.

    ``served_streams[i]`` is ``sum_{k in U_i} D_{i,k}``. Local EZF exchanges
    nothing; WMMSE uploads the raw channel stack and downloads ``P``; RWMMSE
    uploads half the Gram and downloads ``X``. Half-integers are exact.
    """
    total_rx = int(sum(rx_antennas))
    served = [int(s) for s in served_streams]
    if algo in ("local-ezf", "ezf"):
        return [Fraction(0) for _ in served]
    if algo == "wmmse":
        return [Fraction((total_rx + s) * int(m)) for s, m in zip(served, tx_antennas)]
    if algo in ("rwmmse", "rwmmse-lsa", "rwmmse-lus"):
        return [(Fraction(total_rx, 2) + s) * total_rx for s in served]
    raise PreconditionError(f"unknown algorithm tag {algo!r}")


def served_streams(stream_counts: np.ndarray) -> np.ndarray:
    return np.asarray(stream_counts).sum(axis=1)
