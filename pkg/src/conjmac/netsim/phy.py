"""802.11a basic-access airtime model and the saturation throughput formula."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConjmacError


@dataclass(frozen=True)
class PhyParams:
    """Durations in microseconds, sizes in octets, rate in Mbps (PHY mode 8 defaults)."""

    t_slot: float = 9.0
    t_phy: float = 20.0
    t_sifs: float = 16.0
    t_difs: float = 34.0
    t_prop: float = 1.0
    l_mac: float = 28.0
    l_payload: float = 2304.0
    l_ack: float = 14.0
    rate: float = 54.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ConjmacError(f"PHY parameter {name} must be positive")

    @property
    def t_frame(self) -> float:
        return self.t_phy + 8.0 * (self.l_mac + self.l_payload) / self.rate

    @property
    def t_success(self) -> float:
        """Data frame, SIFS, ACK, DIFS and two propagation delays (no RTS/CTS)."""
        ack = self.t_phy + 8.0 * self.l_ack / self.rate
        return self.t_frame + self.t_sifs + ack + self.t_difs + 2.0 * self.t_prop

    @property
    def t_collision(self) -> float:
        return self.t_frame + self.t_difs + self.t_prop

    @property
    def payload_bits(self) -> float:
        return 8.0 * self.l_payload

    def airtime(self, idle: int, success: int, collision: int) -> float:
        """Elapsed microseconds for the given counts of slot outcomes."""
        return idle * self.t_slot + success * self.t_success + collision * self.t_collision


def transmission_probs(class_probs, class_sizes) -> tuple[float, float]:
    """(P_tr, P_s): some node transmits; exactly one node transmits."""
    p = np.asarray(class_probs, dtype=float)
    n = np.asarray(class_sizes, dtype=float)
    if p.shape != n.shape or p.ndim != 1:
        raise ConjmacError("class probabilities and sizes must be equal-length vectors")
    if np.any((p < 0) | (p > 1)) or np.any(n < 0):
        raise ConjmacError("probabilities must lie in [0, 1] and sizes be non-negative")
    q = 1.0 - p
    idle_by_class = q ** n
    p_tr = 1.0 - float(np.prod(idle_by_class))
    p_s = 0.0
    for j in range(p.size):
        if n[j] == 0:
            continue
        others = np.prod(np.delete(idle_by_class, j))
        p_s += n[j] * p[j] * q[j] ** (n[j] - 1.0) * others
    return p_tr, float(p_s)


def bianchi_throughput(class_probs, class_sizes, phy: PhyParams | None = None) -> float:
    """Aggregate saturation throughput in Mbps.

    Per-node probabilities can be passed with all sizes equal to one.
    """
    phy = phy or PhyParams()
    p_tr, p_s = transmission_probs(class_probs, class_sizes)
    if p_s == 0.0:
        return 0.0
    mean_slot = (1.0 - p_tr) * phy.t_slot + p_s * phy.t_success + (p_tr - p_s) * phy.t_collision
    return p_s * phy.payload_bits / mean_slot
