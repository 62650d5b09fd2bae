"""Weighted-sum-rate beamforming and stream allocation for user-centric cell-free MIMO.

Centralized WMMSE, its low-interaction Gram-space rewrite (RWMMSE), Local
EZF, and joint stream allocation / user scheduling, plus a Monte Carlo
harness.
"""

from .channel_io import dump_channels, load_channels
from .errors import DomainError, FormatError, NumericError, PreconditionError, StateError
from .ezf import ezf_beamformer, ezf_lowdim
from .harness import ExperimentSpec, run_experiment, scaling_fit
from .metrics import (
    Beamformer,
    ap_power,
    interaction_count,
    interference_plus_noise,
    ue_rate,
    weighted_sum_rate,
)
from .network import ChannelSet, NetworkConfig, Topology, draw_channels, generate, noise_power, place_network
from .rwmmse import LowDimBeamformer, expand, solve_rwmmse, update_x, wmmse_lowdim_crosscheck
from .streams import (
    StreamAllocation,
    VirtualLowDimBeamformer,
    compute_psi,
    init_allocation,
    solve_rwmmse_lsa,
    solve_rwmmse_lus,
    update_l,
    update_x_streams,
)
from .trace import SolveTrace
from .wmmse import SolverOptions, bisect_multiplier, solve_wmmse, update_p, update_u, update_w

__version__ = "0.1.0"
