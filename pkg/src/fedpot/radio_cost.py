"""Upload/compute latency and energy cost of a supplier, round deadline, utilities.

Rates use the natural logarithm, so they are in nats/s; ``model_size`` is
treated in the same information unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class ChannelSpec:
    bandwidth_share: float  # Hz
    transmit_power: float  # W
    channel_gain_sq: float
    noise_power: float  # W
    upload_power: float  # W
    model_size: float  # bits

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if not getattr(self, name) > 0:
                raise ValueError(f"ChannelSpec.{name} must be positive")

    @property
    def snr(self) -> float:
        return self.transmit_power * self.channel_gain_sq / self.noise_power


@dataclass(frozen=True)
class ComputeSpec:
    cycles_per_sample: float
    cpu_frequency: float  # cycles/s
    chip_coefficient: float
    local_epochs: int
    sample_count: int
    deploy_cost: float = 0.0  # J per round

    def __post_init__(self) -> None:
        if self.cycles_per_sample <= 0 or self.cpu_frequency <= 0 or self.chip_coefficient <= 0:
            raise ValueError("ComputeSpec cycle, frequency and chip fields must be positive")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.sample_count < 0 or self.deploy_cost < 0:
            raise ValueError("sample_count and deploy_cost must be non-negative")


@dataclass(frozen=True)
class CostBreakdown:
    rate: float
    t_upload: float
    t_compute: float
    t_total: float
    c_upload: float
    c_train: float
    c_total: float


def achievable_rate(ch: ChannelSpec) -> float:
    return ch.bandwidth_share * math.log1p(ch.snr)


def cost_breakdown(ch: ChannelSpec, cs: ComputeSpec) -> CostBreakdown:
    rate = achievable_rate(ch)
    t_upload = ch.model_size / rate
    c_upload = t_upload * ch.upload_power
    t_compute = cs.local_epochs * cs.cycles_per_sample * cs.sample_count / cs.cpu_frequency
    c_train = cs.chip_coefficient * cs.cpu_frequency**3 * t_compute
    return CostBreakdown(
        rate=rate,
        t_upload=t_upload,
        t_compute=t_compute,
        t_total=t_upload + t_compute,
        c_upload=c_upload,
        c_train=c_train,
        c_total=cs.deploy_cost + c_train + c_upload,
    )


def round_deadline(selected: Sequence[CostBreakdown]) -> float:
    """Latency of the slowest selected supplier."""
    if not selected:
        raise ValueError("round_deadline needs at least one selected supplier")
    return max(c.t_total for c in selected)


def sps_utility(theta: float, reward: float, cost: float) -> float:
    if not theta * reward > 0:
        raise ValueError(f"theta * reward must be positive, got {theta * reward}")
    return math.log(theta * reward) - cost


def tpr_utility(entries: Iterable[tuple[float, float, float]]) -> float:
    """Retailer utility from ``(theta, revenue, reward)`` triples."""
    return float(sum(theta * revenue - reward for theta, revenue, reward in entries))
