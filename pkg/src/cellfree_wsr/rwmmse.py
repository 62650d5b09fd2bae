"""Low-interaction WMMSE on low-dimension substitutions ``P_{i,k} = Hbar_i^H X_{i,k}``.

Every per-sweep quantity is assembled from the Gram matrices
``G_i = Hbar_i Hbar_i^H``: the effective link ``H_{i,l} P_{i,k}`` is the row
block ``l`` of ``G_i X_{i,k}``, and the AP update

    X_i = (G_i Ablk G_i + lam_i G_i)^+ G_i Z_i

is solved in the whitened range of ``G_i`` (``G_i = R_i R_i^H``), so that no
matrix whose size depends on the antenna count is ever factored.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, PreconditionError
from .metrics import Beamformer, LinkStats, StreamLayout, interaction_count
from .network import ChannelSet
from .trace import SolveTrace
from .wmmse import (
    QuadraticPencil,
    SolverOptions,
    _budgets,
    _weights,
    bisect_multiplier,
    check_feasible,
    mse_weights,
    mmse_receivers,
    receiver_stack,
    run_bcd,
)


class LowDimBeamformer(Beamformer):
    """Per-(AP, UE) substitutions ``X_{i,k}`` with ``sum_k N_k`` rows."""


def expand(channels: ChannelSet, X: LowDimBeamformer) -> Beamformer:
    """Full-dimension beamformer ``P_{i,k} = Hbar_i^H X_{i,k}``."""
    return Beamformer({(i, k): channels.hbar(i).conj().T @ x for (i, k), x in X.blocks.items()})


def gram_effective(channels: ChannelSet, layout: StreamLayout, X: LowDimBeamformer) -> list[np.ndarray]:
    return [channels.gram(i) @ X.ap_matrix(i, layout.served[i]) if layout.ap_width[i]
            else np.zeros((channels.total_rx, 0), dtype=complex)
            for i in range(channels.num_aps)]


def lowdim_stats(channels: ChannelSet, X: LowDimBeamformer) -> LinkStats:
    layout = StreamLayout.of(channels, X)
    return LinkStats(channels, layout, gram_effective(channels, layout, X))


def gram_powers(channels: ChannelSet, X: LowDimBeamformer) -> np.ndarray:
    """Per-AP power ``sum_k Tr(X_{i,k}^H G_i X_{i,k})``."""
    out = np.zeros(channels.num_aps)
    for (i, _), x in X.blocks.items():
        out[i] += np.einsum("ij,ij->", x.conj(), channels.gram(i) @ x).real
    return out


def lowdim_wsr(channels: ChannelSet, X: LowDimBeamformer, weights) -> float:
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (channels.num_ues,))
    return float(weights @ lowdim_stats(channels, X).rates_nats() / np.log(2.0))


def update_u_lowdim(channels: ChannelSet, X: LowDimBeamformer) -> list[np.ndarray]:
    return mmse_receivers(lowdim_stats(channels, X))


def update_w_lowdim(channels: ChannelSet, X: LowDimBeamformer, U) -> list[np.ndarray]:
    return mse_weights(lowdim_stats(channels, X), U)


class GramBasis:
    """Whitened range basis of each ``G_i``: ``G_i = R_i R_i^H`` on its range.

    ``R_i = Q_i Lam_i^{1/2}`` and ``R_i^+ = Q_i Lam_i^{-1/2}`` (``sum N x r_i``).
    Computed once per solve; this is the only Gram-sized eigendecomposition.
    """

    def __init__(self, channels: ChannelSet, floor: float):
        self.root, self.inv_root = [], []
        for i in range(channels.num_aps):
            lam, Q = np.linalg.eigh(channels.gram(i))
            top = max(float(lam.max(initial=0.0)), 0.0)
            keep = lam > floor * top if top > 0 else np.zeros(lam.shape, dtype=bool)
            sq = np.sqrt(lam[keep])
            self.root.append(Q[:, keep] * sq)
            self.inv_root.append(Q[:, keep] / sq)


def _x_update(channels, layout, U, W, weights, budgets, opts, basis: GramBasis, stack=None):
    A, Z = receiver_stack(channels, layout, U, W, weights) if stack is None else stack
    blocks, lams = {}, np.zeros(channels.num_aps)
    for i in range(channels.num_aps):
        if layout.ap_width[i] == 0:
            blocks.update({(i, k): np.zeros((channels.total_rx, 0), dtype=complex)
                           for k in layout.served[i]})
            continue
        R = basis.root[i]
        T = R.conj().T @ A @ R
        T = 0.5 * (T + T.conj().T)
        theta, V = np.linalg.eigh(T)
        pencil = QuadraticPencil(theta, V, R.conj().T @ Z[i], opts.ridge_eps)
        lams[i] = bisect_multiplier(pencil.power, budgets[i], opts.bisect_tol)
        Xi = basis.inv_root[i] @ pencil.solution(lams[i])
        blocks.update({(i, k): Xi[:, cols] for k, cols in layout.ap_cols[i].items()})
    return LowDimBeamformer(blocks), lams


def update_x(channels: ChannelSet, U, W, weights, stream_counts, budgets=1.0,
             opts: SolverOptions = SolverOptions()) -> tuple[LowDimBeamformer, np.ndarray]:
    """Per-AP substitution update with bisected multipliers ``lam_i``."""
    layout = StreamLayout(channels, stream_counts)
    return _x_update(channels, layout, U, W, _weights(channels, weights),
                     _budgets(channels, budgets), opts, GramBasis(channels, opts.ridge_eps))


def solve_rwmmse(channels: ChannelSet, weights, stream_counts, init: LowDimBeamformer, budgets=1.0,
                 opts: SolverOptions = SolverOptions(), init_tag: str = "local-ezf"):
    """RWMMSE; returns the final substitution and its :class:`SolveTrace`.

    Fronthaul interaction (Gram up, ``X`` down) is charged once per solve.
    """
    weights = _weights(channels, weights)
    budgets = _budgets(channels, budgets)
    layout = StreamLayout.of(channels, init)
    if not np.array_equal(layout.counts, np.asarray(stream_counts)):
        raise PreconditionError("init stream counts differ from stream_counts")
    check_feasible(channels, gram_powers(channels, init), budgets)
    trace = SolveTrace("rwmmse", init=init_tag)
    trace.interaction = interaction_count("rwmmse", channels.rx_antennas, channels.tx_antennas,
                                          layout.counts.sum(axis=1))
    basis = GramBasis(channels, opts.ridge_eps)

    def step(U, W, lay):
        return _x_update(channels, lay, U, W, weights, budgets, opts, basis)

    X, _ = run_bcd(channels, layout, weights, init,
                   lambda b, lay: gram_effective(channels, lay, b), step, opts, trace,
                   lambda b: gram_powers(channels, b))
    return X, trace


def wmmse_lowdim_crosscheck(channels: ChannelSet, U, W, weights, mu, stream_counts,
                            reference: Beamformer | None = None, tol: float = 1e-8) -> list[np.ndarray]:
    """Per-AP ``X_i = Ustk (Om Ustk^H G_i Ustk + mu_i Wstk^{-1})^{-1} Om Xi_i^H``.

    ``Ustk``, ``Wstk`` and ``Om`` are block-diagonal over all UEs, and
    ``Xi_i`` selects AP ``i``'s stream columns. When ``reference`` (a WMMSE
    beamformer built from the same ``U, W, mu``) is given, ``Hbar_i^H X_i`` is
    compared with it and a mismatch above ``tol`` (relative to the largest
    entry) raises :class:`NumericError` with a report.
    """
    from scipy.linalg import block_diag

    weights = _weights(channels, weights)
    layout = StreamLayout(channels, stream_counts)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (channels.num_aps,))
    Ustk = block_diag(*U).astype(complex)
    widths = layout.ue_width
    Winv = block_diag(*[np.linalg.inv(w) if w.size else w for w in W]).astype(complex)
    omega = np.concatenate([np.full(widths[k], weights[k]) for k in range(channels.num_ues)])
    starts = np.concatenate([[0], np.cumsum(widths)])
    out = []
    for i in range(channels.num_aps):
        sel = []
        for k in layout.served[i]:
            cols = layout.ue_cols[k][i]
            sel.extend(range(starts[k] + cols.start, starts[k] + cols.stop))
        sel = np.asarray(sel, dtype=int)
        core = omega[:, None] * (Ustk.conj().T @ channels.gram(i) @ Ustk) + mu[i] * Winv
        rhs = np.zeros((Ustk.shape[1], sel.size), dtype=complex)
        rhs[sel, np.arange(sel.size)] = omega[sel]
        Xi = Ustk @ np.linalg.solve(core, rhs)
        out.append(Xi)
        if reference is not None and sel.size:
            Pi = reference.ap_matrix(i, layout.served[i])
            got = channels.hbar(i).conj().T @ Xi
            scale = max(np.abs(Pi).max(initial=0.0), 1e-300)
            err = np.abs(got - Pi).max(initial=0.0) / scale
            if err > tol:
                raise NumericError(f"AP {i}: low-dimension rewrite differs from WMMSE update by {err:.3e}")
    return out
