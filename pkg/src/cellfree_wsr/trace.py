"""Per-run solver bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass
class SolveTrace:
    algorithm: str
    init: str = "local-ezf"
    initial_wsr: float = float("nan")
    wsr: list[float] = field(default_factory=list)
    ap_power: list[np.ndarray] = field(default_factory=list)
    multipliers: list[np.ndarray] = field(default_factory=list)
    stream_totals: list[int] = field(default_factory=list)
    sweep_seconds: list[float] = field(default_factory=list)
    interaction: list[Fraction] = field(default_factory=list)
    large_factorizations: int = 0
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.wsr)

    @property
    def final_wsr(self) -> float:
        return self.wsr[-1] if self.wsr else self.initial_wsr

    @property
    def wsr_nats(self) -> np.ndarray:
        """Objective sequence (initial point first) in natural-log units."""
        return np.log(2.0) * np.asarray([self.initial_wsr, *self.wsr])

    def ascent_violations(self, slack: float = 1e-9) -> int:
        return int(np.sum(np.diff(self.wsr_nats) < -slack))

    @property
    def wall_seconds(self) -> float:
        return float(sum(self.sweep_seconds))

    def median_sweep_seconds(self) -> float:
        times = self.sweep_seconds[1:] if len(self.sweep_seconds) > 1 else self.sweep_seconds
        return float(np.median(times)) if times else float("nan")

    @property
    def interaction_total(self) -> Fraction:
        return sum(self.interaction, Fraction(0))
