"""Local eigen-zero-forcing: per-AP precoding from local CSI only."""

from __future__ import annotations

import numpy as np

from .errors import NumericError, PreconditionError
from .metrics import Beamformer
from .network import ChannelSet
from .rwmmse import LowDimBeamformer


def _phase_fixed_svd(h: np.ndarray):
    """Thin SVD with each right singular vector's first nonzero entry real positive."""
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    v = vh.conj().T
    for j in range(v.shape[1]):
        nz = np.flatnonzero(np.abs(v[:, j]) > 1e-14 * max(np.abs(v[:, j]).max(), 1e-300))
        if nz.size:
            ph = v[nz[0], j] / abs(v[nz[0], j])
            v[:, j] *= ph.conj()
            u[:, j] *= ph.conj()
    return u, s, v


def _check(channels: ChannelSet, D: np.ndarray):
    for i in range(channels.num_aps):
        total = sum(D[i, k] for k in channels.served_sets[i])
        if total > channels.tx_antennas[i]:
            raise PreconditionError(f"AP {i} carries {total} streams on {channels.tx_antennas[i]} antennas")
    for k in range(channels.num_ues):
        for i in channels.serving_sets[k]:
            if D[i, k] > min(channels.rx_antennas[k], channels.tx_antennas[i]):
                raise PreconditionError(f"D[{i},{k}] exceeds the rank of H_{i},{k}")


def _ap_solution(channels: ChannelSet, i: int, D: np.ndarray, budget: float):
    """Effective channel, its pseudo-inverse scaling, and per-UE SVD factors of AP ``i``."""
    served = [k for k in channels.served_sets[i]]
    factors, columns = {}, []
    for k in served:
        if D[i, k] == 0:
            continue
        u, s, v = _phase_fixed_svd(channels.link(i, k))
        if s[D[i, k] - 1] <= 1e-12 * s[0]:
            raise NumericError(f"link ({i},{k}) has rank below {D[i, k]}")
        factors[k] = (u, s, v)
        columns.append(v[:, : D[i, k]])
    if not columns:
        return None
    Vi = np.hstack(columns)
    gram = Vi.conj().T @ Vi
    if np.linalg.cond(gram) > 1e12:
        raise NumericError(f"effective channel of AP {i} is rank deficient")
    gram_inv = np.linalg.inv(gram)
    pinv = Vi @ gram_inv
    scale = np.sqrt(budget) / np.linalg.norm(pinv)
    return factors, pinv * scale, gram_inv * scale


def ezf_beamformer(channels: ChannelSet, stream_counts, budgets=1.0) -> Beamformer:
    """Per-AP zero-forcing on the leading right singular vectors of each served link.

    Each AP reads only ``H_{i,k}`` for ``k`` it serves. Columns are split back
    to per-UE blocks in ascending UE order; every AP transmits at full budget.
    """
    D = np.asarray(stream_counts, dtype=int)
    _check(channels, D)
    budgets = np.broadcast_to(np.asarray(budgets, dtype=float), (channels.num_aps,))
    blocks = {}
    for i in range(channels.num_aps):
        M = channels.tx_antennas[i]
        sol = _ap_solution(channels, i, D, budgets[i])
        start = 0
        for k in channels.served_sets[i]:
            d = D[i, k]
            blocks[(i, k)] = sol[1][:, start:start + d] if d else np.zeros((M, 0), dtype=complex)
            start += d
    return Beamformer(blocks)


def ezf_lowdim(channels: ChannelSet, stream_counts, budgets=1.0) -> LowDimBeamformer:
    """Low-dimension form of :func:`ezf_beamformer` in the all-UE channel basis.

    Row block ``k'`` of AP ``i``'s substitution is
    ``Ubar_{k'}[:, :D] Sigma_{k'}^{-1} Gamma_i`` restricted to ``k'``'s streams;
    rows of UEs the AP does not serve stay zero, so ``Hbar_i^H X`` reproduces
    the full-dimension beamformer.
    """
    D = np.asarray(stream_counts, dtype=int)
    _check(channels, D)
    budgets = np.broadcast_to(np.asarray(budgets, dtype=float), (channels.num_aps,))
    blocks = {}
    for i in range(channels.num_aps):
        sol = _ap_solution(channels, i, D, budgets[i])
        width = sum(D[i, k] for k in channels.served_sets[i])
        X = np.zeros((channels.total_rx, width), dtype=complex)
        if sol is not None:
            factors, _, gamma = sol
            start = 0
            for k in channels.served_sets[i]:
                d = D[i, k]
                if d == 0:
                    continue
                u, s, _ = factors[k]
                X[channels.rows(k)] = (u[:, :d] / s[:d]) @ gamma[start:start + d]
                start += d
        start = 0
        for k in channels.served_sets[i]:
            blocks[(i, k)] = X[:, start:start + D[i, k]]
            start += D[i, k]
    return LowDimBeamformer(blocks)
