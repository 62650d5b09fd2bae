"""Centralized WMMSE for fixed stream counts.

Block coordinate descent over MMSE receivers ``U_k``, MSE weights ``W_k``
and per-AP beamformers ``P_i``. The beamformer block of AP ``i`` is

    P_i(mu) = (sum_l a_l H_{i,l}^H A_l H_{i,l} + mu I)^+ B_i,   A_l = U_l W_l U_l^H,

with ``mu >= 0`` found by bisection on the per-AP power budget. The system
matrix is eigendecomposed once per sweep so that every bisection step is a
diagonal rescale.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import block_diag

from .errors import NumericError, PreconditionError
from .metrics import LN2, Beamformer, LinkStats, StreamLayout, ap_powers, full_effective, interaction_count
from .network import ChannelSet
from .trace import SolveTrace


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls.

    ``ridge_eps`` is the relative eigenvalue floor below which a direction of
    the quadratic subproblem is treated as null (pseudo-inverse), and
    ``bisect_tol`` the relative power tolerance of the multiplier search.
    """

    max_iters: int = 500
    rel_tol: float = 1e-6
    bisect_tol: float = 1e-12
    ridge_eps: float = 1e-12

    def __post_init__(self):
        if self.max_iters < 1 or min(self.rel_tol, self.bisect_tol, self.ridge_eps) <= 0:
            raise PreconditionError("solver options must be positive")


@dataclass
class MmseAux:
    U: list[np.ndarray]
    W: list[np.ndarray]


def _weights(channels: ChannelSet, weights) -> np.ndarray:
    w = np.broadcast_to(np.asarray(weights, dtype=float), (channels.num_ues,)).copy()
    if np.any(w <= 0):
        raise PreconditionError("rate weights must be positive")
    return w


def _budgets(channels: ChannelSet, budgets) -> np.ndarray:
    b = np.broadcast_to(np.asarray(budgets, dtype=float), (channels.num_aps,)).copy()
    if np.any(b <= 0):
        raise PreconditionError("power budgets must be positive")
    return b


def mmse_receivers(stats: LinkStats) -> list[np.ndarray]:
    out = []
    for S, N in zip(stats.signal, stats.cov):
        if S.shape[1] == 0:
            out.append(S.copy())
            continue
        out.append(np.linalg.solve(N + S @ S.conj().T, S))
    return out


def mse_weights(stats: LinkStats, U: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for S, Uk in zip(stats.signal, U):
        d = S.shape[1]
        if d == 0:
            out.append(np.zeros((0, 0), dtype=complex))
            continue
        try:
            Wk = np.linalg.inv(np.eye(d) - Uk.conj().T @ S)
        except np.linalg.LinAlgError as exc:
            raise NumericError("I - U^H H P is singular (degenerate beamformer)") from exc
        out.append(0.5 * (Wk + Wk.conj().T))
    return out


def mse_matrices(stats: LinkStats, U: list[np.ndarray]) -> list[np.ndarray]:
    """``E_k = (I - U^H S)(I - U^H S)^H + U^H N U``."""
    out = []
    for S, N, Uk in zip(stats.signal, stats.cov, U):
        R = np.eye(S.shape[1]) - Uk.conj().T @ S
        out.append(R @ R.conj().T + Uk.conj().T @ N @ Uk)
    return out


def update_u(channels: ChannelSet, bf: Beamformer) -> list[np.ndarray]:
    """MMSE receivers ``U_k = (N_k + H_k P_k P_k^H H_k^H)^{-1} H_k P_k``."""
    layout = StreamLayout.of(channels, bf)
    return mmse_receivers(LinkStats(channels, layout, full_effective(channels, layout, bf)))


def update_w(channels: ChannelSet, bf: Beamformer, U: list[np.ndarray]) -> list[np.ndarray]:
    """MSE weights ``W_k = (I - U_k^H H_k P_k)^{-1}``."""
    layout = StreamLayout.of(channels, bf)
    return mse_weights(LinkStats(channels, layout, full_effective(channels, layout, bf)), U)


def bisect_multiplier(power_of_mu: Callable[[float], float], p_max: float, tol: float = 1e-8,
                      max_doublings: int = 128, max_steps: int = 400) -> float:
    """Smallest-power-feasible Lagrange multiplier for a nonincreasing power map.

    Returns 0 when the unconstrained point already fits the budget. Otherwise
    the upper bracket is found by doubling from 1 and then shrunk by
    false position on ``1/sqrt(power)`` (nearly linear in ``mu``), with the
    Illinois safeguard and a midpoint fallback. The returned multiplier always
    sits on the feasible side, with power in ``[p_max (1 - tol), p_max]``.
    """
    p0 = power_of_mu(0.0)
    if p0 <= p_max:
        return 0.0
    lo, hi = 0.0, 1.0
    p_lo, p_hi = p0, power_of_mu(hi)
    doublings = 0
    while p_hi > p_max:
        lo, p_lo = hi, p_hi
        hi *= 2.0
        p_hi = power_of_mu(hi)
        doublings += 1
        if doublings > max_doublings:
            raise NumericError("power bracket not found")
    target = 1.0 / np.sqrt(p_max)

    def g(p):
        return (1.0 / np.sqrt(p) if p > 0 else np.inf) - target

    g_lo, g_hi = g(p_lo), g(p_hi)
    side = 0
    for _ in range(max_steps):
        if p_max - p_hi <= tol * p_max:
            break
        if np.isfinite(g_hi) and g_hi > g_lo:
            mid = hi - g_hi * (hi - lo) / (g_hi - g_lo)
        else:
            mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                break
        p_mid = power_of_mu(mid)
        if p_mid > p_max:
            lo, p_lo, g_lo = mid, p_mid, g(p_mid)
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            hi, p_hi, g_hi = mid, p_mid, g(p_mid)
            if side == 1:
                g_lo *= 0.5
            side = 1
    return hi


class QuadraticPencil:
    """Minimiser family ``x(mu) = V (theta + mu)^{-1} V^H b`` of a PSD quadratic.

    Directions with eigenvalue below ``floor * max(theta)`` are dropped, which
    makes ``x(0)`` the minimum-norm minimiser when the system is singular.
    """

    def __init__(self, theta: np.ndarray, vectors: np.ndarray, rhs: np.ndarray, floor: float):
        theta = np.asarray(theta, dtype=float)
        top = max(float(theta.max(initial=0.0)), 0.0)
        keep = theta > floor * top if top > 0 else np.zeros(theta.shape, dtype=bool)
        self.theta = theta[keep]
        self.vectors = vectors[:, keep]
        self.coef = self.vectors.conj().T @ rhs
        self._energy = np.sum(np.abs(self.coef) ** 2, axis=1)

    def power(self, mu: float) -> float:
        inv = 1.0 / (self.theta + mu)
        return float(self._energy @ (inv * inv))

    def solution(self, mu: float) -> np.ndarray:
        return self.vectors @ (self.coef / (self.theta + mu)[:, None])


def receiver_stack(channels: ChannelSet, layout: StreamLayout, U, W, weights) -> tuple[np.ndarray, list[np.ndarray]]:
    """Block-diagonal ``blkdiag(a_l U_l W_l U_l^H)`` and per-AP right-hand sides.

    The AP ``i`` right-hand side (``sum N x sum_k D_{i,k}``) carries
    ``a_k U_k W_k`` restricted to AP ``i``'s stream columns in row block ``k``.
    """
    weighted = []
    uw = []
    for k in range(channels.num_ues):
        UW = U[k] @ W[k]
        uw.append(UW)
        weighted.append(weights[k] * (UW @ U[k].conj().T))
    A = block_diag(*weighted).astype(complex)
    Z = []
    for i in range(channels.num_aps):
        Zi = np.zeros((channels.total_rx, layout.ap_width[i]), dtype=complex)
        for k, cols in layout.ap_cols[i].items():
            Zi[channels.rows(k), cols] = weights[k] * uw[k][:, layout.ue_cols[k][i]]
        Z.append(Zi)
    return A, Z


def _split(layout: StreamLayout, i: int, Pi: np.ndarray) -> dict:
    return {(i, k): Pi[:, cols] for k, cols in layout.ap_cols[i].items()}


def _p_update(channels, layout, U, W, weights, budgets, opts, trace=None):
    A, Z = receiver_stack(channels, layout, U, W, weights)
    blocks, mus = {}, np.zeros(channels.num_aps)
    for i in range(channels.num_aps):
        M = channels.tx_antennas[i]
        if layout.ap_width[i] == 0:
            blocks.update({(i, k): np.zeros((M, 0), dtype=complex) for k in layout.served[i]})
            continue
        Hb = channels.hbar(i)
        C = Hb.conj().T @ (A @ Hb)
        C = 0.5 * (C + C.conj().T)
        theta, V = np.linalg.eigh(C)
        if trace is not None:
            trace.large_factorizations += 1
        pencil = QuadraticPencil(theta, V, Hb.conj().T @ Z[i], opts.ridge_eps)
        mus[i] = bisect_multiplier(pencil.power, budgets[i], opts.bisect_tol)
        blocks.update(_split(layout, i, pencil.solution(mus[i])))
    return Beamformer(blocks), mus


def update_p(channels: ChannelSet, U, W, weights, stream_counts, budgets=1.0,
             opts: SolverOptions = SolverOptions()) -> tuple[Beamformer, np.ndarray]:
    """Per-AP beamformer update with bisected power multipliers ``mu_i``."""
    layout = StreamLayout(channels, stream_counts)
    return _p_update(channels, layout, U, W, _weights(channels, weights),
                     _budgets(channels, budgets), opts)


def run_bcd(channels: ChannelSet, layout: StreamLayout, weights: np.ndarray, beam,
            effective: Callable, step: Callable, opts: SolverOptions, trace: SolveTrace,
            powers: Callable, on_sweep: Callable | None = None):
    """Shared BCD driver: U, W, then ``step(U, W) -> (beam, multipliers)``.

    ``effective(beam, layout)`` gives the per-AP effective links; ``step`` may
    also return a replacement layout when stream counts change.
    """
    stats = LinkStats(channels, layout, effective(beam, layout))
    wsr = float(weights @ stats.rates_nats() / LN2)
    trace.initial_wsr = wsr
    if not np.isfinite(wsr):
        raise NumericError("non-finite initial objective", trace)
    for _ in range(opts.max_iters):
        t0 = time.perf_counter()
        U = mmse_receivers(stats)
        W = mse_weights(stats, U)
        out = step(U, W, layout)
        beam, mus = out[0], out[1]
        if len(out) > 2:
            layout = out[2]
        stats = LinkStats(channels, layout, effective(beam, layout))
        new = float(weights @ stats.rates_nats() / LN2)
        trace.sweep_seconds.append(time.perf_counter() - t0)
        trace.wsr.append(new)
        trace.ap_power.append(powers(beam))
        trace.multipliers.append(np.asarray(mus, dtype=float))
        if on_sweep is not None:
            on_sweep(beam, layout)
        if not np.isfinite(new):
            raise NumericError("non-finite weighted sum rate", trace)
        if abs(new - wsr) <= opts.rel_tol * max(abs(wsr), np.finfo(float).tiny):
            trace.converged = True
            break
        wsr = new
    return beam, layout


def check_feasible(channels: ChannelSet, powers: np.ndarray, budgets: np.ndarray, slack: float = 1e-8):
    if np.any(powers > budgets * (1 + slack)):
        raise PreconditionError("initial beamformer violates a per-AP power budget")


def solve_wmmse(channels: ChannelSet, weights, stream_counts, init: Beamformer, budgets=1.0,
                opts: SolverOptions = SolverOptions(), init_tag: str = "local-ezf"):
    """Centralized WMMSE; returns the final beamformer and its :class:`SolveTrace`."""
    weights = _weights(channels, weights)
    budgets = _budgets(channels, budgets)
    layout = StreamLayout.of(channels, init)
    if not np.array_equal(layout.counts, np.asarray(stream_counts)):
        raise PreconditionError("init stream counts differ from stream_counts")
    check_feasible(channels, ap_powers(channels, init), budgets)
    trace = SolveTrace("wmmse", init=init_tag)
    trace.interaction = interaction_count("wmmse", channels.rx_antennas, channels.tx_antennas,
                                          layout.counts.sum(axis=1))

    def step(U, W, lay):
        return _p_update(channels, lay, U, W, weights, budgets, opts, trace)

    beam, _ = run_bcd(channels, layout, weights, init,
                      lambda b, lay: full_effective(channels, lay, b), step, opts, trace,
                      lambda b: ap_powers(channels, b))
    return beam, trace
