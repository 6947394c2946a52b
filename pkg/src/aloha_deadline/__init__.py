"""Deadline-constrained traffic over slotted ALOHA with limited retransmissions."""

from .channel import (
    ROUND_TABLE,
    TABLE2,
    ChannelParams,
    SuccessTable,
    convert_units,
    received_power_factor,
    success_prob_mpr,
    success_prob_solo,
    symmetric_success_table,
)
from .dtmc import (
    ChainState,
    MarkovModel,
    SteadyState,
    analyze,
    build_chain,
    build_full_retx_chain,
    build_limited_retx_chain,
    drop_rate,
    optimize_q,
    steady_state,
    throughput,
)
from .sdp import SdpQuery, sdp, sdp_no_retx, sdp_table
from .service import Scenario, ServiceModel, service_prob
from .sim import SimConfig, SimResult, run_replications, run_simulation

__version__ = "0.1.0"
