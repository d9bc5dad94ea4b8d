"""Slot-level MAC simulator, per-slot rules and the airtime throughput model."""
from .kernel import KERNEL_BACKEND
from .phy import PhyParams, bianchi_throughput, transmission_probs
from .rules import (
    CW_MAX,
    CW_MIN,
    DcfState,
    dcf_step,
    estimate_state,
    expected_slot_br,
    expected_slot_gp,
    slot_rule_br,
    slot_rule_gp,
)
from .sim import SimConfig, SimEvent, SimTrace, run_sim

__all__ = [
    "KERNEL_BACKEND",
    "PhyParams",
    "bianchi_throughput",
    "transmission_probs",
    "CW_MAX",
    "CW_MIN",
    "DcfState",
    "dcf_step",
    "estimate_state",
    "expected_slot_br",
    "expected_slot_gp",
    "slot_rule_br",
    "slot_rule_gp",
    "SimConfig",
    "SimEvent",
    "SimTrace",
    "run_sim",
]
