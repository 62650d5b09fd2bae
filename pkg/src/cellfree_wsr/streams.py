"""Joint beamforming and linear stream allocation (RWMMSE-LSA) and its user-scheduling variant.

Each serving pair owns a virtual substitution ``Xbar_{i,k}`` with ``N_k``
columns and a bit mask ``L_{i,k}`` selecting the columns actually sent. The
mask step is linear: per UE it keeps the up-to-``N_k`` most negative entries
of the per-stream score ``psi``.
"""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from .errors import NumericError, PreconditionError
from .metrics import StreamLayout, interaction_count
from .network import ChannelSet
from .rwmmse import GramBasis, LowDimBeamformer, _x_update, gram_effective, gram_powers
from .trace import SolveTrace
from .wmmse import SolverOptions, _budgets, _weights, receiver_stack, run_bcd

PSI_ZERO = 1e-12


class StreamAllocation:
    """Bit masks ``L_{i,k}`` (length ``N_k``) for every serving pair."""

    def __init__(self, bits: Mapping[tuple[int, int], np.ndarray]):
        self.bits = {(int(i), int(k)): np.asarray(b, dtype=bool).copy() for (i, k), b in bits.items()}

    def __getitem__(self, key):
        return self.bits[key]

    def counts(self, num_aps: int, num_ues: int) -> np.ndarray:
        D = np.zeros((num_aps, num_ues), dtype=int)
        for (i, k), b in self.bits.items():
            D[i, k] = int(b.sum())
        return D

    def ue_totals(self, num_ues: int) -> np.ndarray:
        out = np.zeros(num_ues, dtype=int)
        for (_, k), b in self.bits.items():
            out[k] += int(b.sum())
        return out

    def total(self) -> int:
        return int(sum(b.sum() for b in self.bits.values()))

    def copy(self) -> "StreamAllocation":
        return StreamAllocation(self.bits)

    def is_feasible(self, rx_antennas) -> bool:
        return bool(np.all(self.ue_totals(len(rx_antennas)) <= np.asarray(rx_antennas)))


class VirtualLowDimBeamformer(LowDimBeamformer):
    """Substitutions ``Xbar_{i,k}`` with a fixed ``N_k`` columns per serving pair."""


def _ap_order(channels: ChannelSet, k: int) -> list[int]:
    aps = list(channels.serving_sets[k])
    if channels.distances is not None:
        key = [channels.distances[i, k] for i in aps]
    else:
        key = [-float(np.sum(np.abs(channels.link(i, k)) ** 2)) for i in aps]
    order = np.argsort(np.asarray(key), kind="stable")
    return [aps[j] for j in order]


def init_allocation(channels: ChannelSet, mode: str = "even",
                    rng: Optional[np.random.Generator] = None) -> StreamAllocation:
    """Initial masks: all ``N_k`` streams per UE.

    ``mode="even"`` splits them as evenly as possible over the serving set,
    giving the remainder to nearer APs (channel energy decides when distances
    are unknown) and setting the leading bits. ``mode="random"`` draws ``N_k``
    of the ``|I_k| N_k`` (AP, stream) slots uniformly with ``rng``.
    """
    bits = {}
    for k in range(channels.num_ues):
        n = channels.rx_antennas[k]
        aps = channels.serving_sets[k]
        if mode == "even":
            order = _ap_order(channels, k)
            base, rem = divmod(n, len(aps))
            for rank, i in enumerate(order):
                b = np.zeros(n, dtype=bool)
                b[: min(base + (rank < rem), channels.tx_antennas[i])] = True
                bits[(i, k)] = b
        elif mode == "random":
            if rng is None:
                raise PreconditionError("random allocation needs an rng")
            flat = np.zeros(len(aps) * n, dtype=bool)
            flat[rng.choice(flat.size, size=n, replace=False)] = True
            for j, i in enumerate(aps):
                bits[(i, k)] = flat[j * n:(j + 1) * n]
        else:
            raise PreconditionError(f"unknown allocation mode {mode!r}")
    return StreamAllocation(bits)


def masked(X: VirtualLowDimBeamformer, L: StreamAllocation) -> VirtualLowDimBeamformer:
    """``Xbar_{i,k} diag(L_{i,k})``: same shape, cleared columns exactly zero."""
    return VirtualLowDimBeamformer({key: np.where(L[key][None, :], x, 0) for key, x in X.blocks.items()})


def compact(X: VirtualLowDimBeamformer, L: StreamAllocation) -> LowDimBeamformer:
    """Only the allocated columns of each ``Xbar_{i,k}``."""
    return LowDimBeamformer({key: x[:, L[key]] for key, x in X.blocks.items()})


def virtual_from(channels: ChannelSet, X: LowDimBeamformer, L: StreamAllocation) -> VirtualLowDimBeamformer:
    """Scatter compact substitutions back into ``N_k``-column blocks at the set bits."""
    out = {}
    for (i, k), bits in L.bits.items():
        x = X[(i, k)]
        if x.shape[1] != int(bits.sum()):
            raise PreconditionError(f"pair ({i},{k}) has {x.shape[1]} columns for {int(bits.sum())} bits")
        full = np.zeros((channels.total_rx, bits.size), dtype=complex)
        full[:, bits] = x
        out[(i, k)] = full
    return VirtualLowDimBeamformer(out)


def _check_allocation(channels: ChannelSet, L: StreamAllocation):
    expected = {(i, k) for k, aps in enumerate(channels.serving_sets) for i in aps}
    if set(L.bits) != expected:
        raise PreconditionError("allocation keys must be exactly the serving pairs")
    for (i, k), b in L.bits.items():
        if b.shape != (channels.rx_antennas[k],):
            raise PreconditionError(f"mask ({i},{k}) must have N_k entries")
    if not L.is_feasible(channels.rx_antennas):
        raise PreconditionError("allocation exceeds a UE's receive stream limit")


def update_x_streams(channels: ChannelSet, U, W, L: StreamAllocation, weights, budgets=1.0,
                     opts: SolverOptions = SolverOptions()) -> VirtualLowDimBeamformer:
    """Masked substitution update; columns at clear bits are exactly zero."""
    _check_allocation(channels, L)
    layout = StreamLayout(channels, L.counts(channels.num_aps, channels.num_ues))
    X, _ = _x_update(channels, layout, U, W, _weights(channels, weights), _budgets(channels, budgets),
                     opts, GramBasis(channels, opts.ridge_eps))
    return virtual_from(channels, X, L)


def compute_psi(channels: ChannelSet, X: VirtualLowDimBeamformer, L: StreamAllocation, U, W,
                weights, layout: Optional[StreamLayout] = None, A: Optional[np.ndarray] = None) -> list[np.ndarray]:
    """Per-UE stream scores, concatenated over serving APs in ascending order.

    For column ``j`` of ``Pbar_{i,k} = Hbar_i^H Xbar_{i,k}`` the score is the
    diagonal entry of ``sum_l a_l Pbar^H H_{i,l}^H A_l H_{i,l} Pbar`` minus
    ``2 a_k Re`` of the matching entry of ``Xi_{i,k} W_k U_k^H H_{i,k} Pbar``.
    ``U``, ``W`` are indexed by the allocated streams of ``L``.
    """
    weights = _weights(channels, weights)
    if layout is None:
        layout = StreamLayout(channels, L.counts(channels.num_aps, channels.num_ues))
    if A is None:
        A, _ = receiver_stack(channels, layout, U, W, weights)
    psi = []
    for k in range(channels.num_ues):
        n = channels.rx_antennas[k]
        WU = W[k] @ U[k].conj().T
        parts = []
        for i in channels.serving_sets[k]:
            F = channels.gram(i) @ X[(i, k)]
            quad = np.einsum("ij,ij->j", F.conj(), A @ F).real
            lin = np.zeros(n)
            active = np.flatnonzero(L[(i, k)])
            if active.size:
                start = layout.ue_cols[k][i].start
                rows = WU[start:start + active.size]
                Fk = F[channels.rows(k)][:, active]
                lin[active] = 2.0 * weights[k] * np.einsum("ij,ji->i", rows, Fk).real
            parts.append(quad - lin)
        psi.append(np.concatenate(parts) if parts else np.zeros(0))
    return psi


def update_l(psi, rx_antennas, serving_sets=None) -> list[np.ndarray] | StreamAllocation:
    """Keep the up-to-``N_k`` smallest strictly negative scores per UE.

    Scores in ``[-1e-12, 0)`` count as zero; ties go to the lower flat index.
    Returns flat bit vectors, or a :class:`StreamAllocation` when
    ``serving_sets`` is given.
    """
    flat = []
    for k, p in enumerate(psi):
        p = np.asarray(p, dtype=float)
        bits = np.zeros(p.size, dtype=bool)
        order = np.argsort(p, kind="stable")
        chosen = [j for j in order[: rx_antennas[k]] if p[j] < -PSI_ZERO]
        bits[chosen] = True
        flat.append(bits)
    if serving_sets is None:
        return flat
    out = {}
    for k, bits in enumerate(flat):
        n = rx_antennas[k]
        for j, i in enumerate(serving_sets[k]):
            out[(i, k)] = bits[j * n:(j + 1) * n]
    return StreamAllocation(out)


def solve_rwmmse_lsa(channels: ChannelSet, weights, init_L: StreamAllocation,
                     init_X: VirtualLowDimBeamformer, budgets=1.0, opts: SolverOptions = SolverOptions(),
                     update_streams: bool = True, init_tag: str = "local-ezf", algorithm: str = "rwmmse-lsa"):
    """RWMMSE with the linear stream-allocation step after each substitution update.

    Returns the final (compact) substitution, the allocation, and the trace.
    Per-AP power is checked after every mask step without re-projection.
    """
    weights = _weights(channels, weights)
    budgets = _budgets(channels, budgets)
    _check_allocation(channels, init_L)
    I, K = channels.num_aps, channels.num_ues
    state = {"X": masked(init_X, init_L), "L": init_L.copy()}
    beam = compact(state["X"], state["L"])
    if np.any(gram_powers(channels, beam) > budgets * (1 + 1e-8)):
        raise PreconditionError("initial substitution violates a per-AP power budget")
    layout = StreamLayout(channels, state["L"].counts(I, K))
    trace = SolveTrace(algorithm, init=init_tag)
    basis = GramBasis(channels, opts.ridge_eps)

    layouts = {}

    def layout_of(alloc: StreamAllocation) -> StreamLayout:
        counts = alloc.counts(I, K)
        key = counts.tobytes()
        if key not in layouts:
            layouts[key] = StreamLayout(channels, counts)
        return layouts[key]

    def step(U, W, lay):
        L = state["L"]
        stack = receiver_stack(channels, lay, U, W, weights)
        Xc, lams = _x_update(channels, lay, U, W, weights, budgets, opts, basis, stack)
        Xv = virtual_from(channels, Xc, L)
        state["X"] = Xv
        if not update_streams:
            return Xc, lams
        before = gram_powers(channels, Xc)
        psi = compute_psi(channels, Xv, L, U, W, weights, lay, stack[0])
        L_new = update_l(psi, channels.rx_antennas, channels.serving_sets)
        Xn = compact(Xv, L_new)
        after = gram_powers(channels, Xn)
        if np.any(after > before * (1 + 1e-12) + 1e-300) or np.any(after > budgets * (1 + 1e-8)):
            raise NumericError("stream allocation step raised a per-AP power", trace)
        state["L"] = L_new
        return Xn, lams, layout_of(L_new)

    def on_sweep(beam, lay):
        trace.stream_totals.append(int(lay.counts.sum()))

    beam, layout = run_bcd(channels, layout, weights, beam,
                           lambda b, lay: gram_effective(channels, lay, b), step, opts, trace,
                           lambda b: gram_powers(channels, b), on_sweep)
    L = state["L"]
    trace.interaction = interaction_count("rwmmse", channels.rx_antennas, channels.tx_antennas,
                                          L.counts(I, K).sum(axis=1))
    return beam, L, trace


def candidate_channels(channels: ChannelSet) -> ChannelSet:
    """Same links and noise with every AP a candidate server of every UE."""
    return channels.with_serving([tuple(range(channels.num_aps))] * channels.num_ues)


def solve_rwmmse_lus(channels: ChannelSet, weights, budgets=1.0, opts: SolverOptions = SolverOptions(),
                     mode: str = "even", rng: Optional[np.random.Generator] = None):
    """Stream allocation over all APs; the APs left carrying streams become the serving sets.

    Returns ``(X, L, serving_sets, trace)`` where ``X`` and ``L`` are keyed on
    every (AP, UE) pair of the all-AP candidate set.
    """
    from .ezf import ezf_lowdim

    cand = candidate_channels(channels)
    L0 = init_allocation(cand, mode, rng)
    X0 = ezf_lowdim(cand, L0.counts(cand.num_aps, cand.num_ues), budgets)
    X, L, trace = solve_rwmmse_lsa(cand, weights, L0, virtual_from(cand, X0, L0), budgets, opts,
                                   algorithm="rwmmse-lus")
    serving = tuple(tuple(i for i in range(cand.num_aps) if L[(i, k)].any())
                    for k in range(cand.num_ues))
    return X, L, serving, trace


def lsa_init(channels: ChannelSet, budgets=1.0, mode: str = "even",
             rng: Optional[np.random.Generator] = None):
    """Default starting point: allocation per ``mode`` and Local EZF substitutions on its bits."""
    from .ezf import ezf_lowdim

    L0 = init_allocation(channels, mode, rng)
    X0 = ezf_lowdim(channels, L0.counts(channels.num_aps, channels.num_ues), budgets)
    return L0, virtual_from(channels, X0, L0)
