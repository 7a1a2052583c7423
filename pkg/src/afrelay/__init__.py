"""Greedy MMSE antenna selection for amplify-and-forward MIMO relay networks."""

from .channel import AntennaPair, ChannelRealization, NetworkConfig, candidate_pairs, draw_network
from .link import build_link, equivalent_link, mse_direct, relay_gain, transmit_qpsk, wiener_filter
from .selection import (
    SelectionResult,
    SelectionState,
    apply_global_power_constraint,
    dors_select,
    exhaustive_select,
    exhaustive_trial_count,
    gmm_select,
    incremental_mse,
    so_select,
)

__version__ = "0.1.0"
