"""Closed-form excess noise factors for n-step staircase multipliers.

Every function here is pure and works in linear units (never dB).
A staircase step with ionization probability ``p`` turns each entering
electron into 2 electrons with probability ``p`` and leaves it alone
otherwise, so its gain has mean ``1 + p`` and variance ``p (1 - p)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DomainError

__all__ = [
    "StepProfile",
    "StepMoments",
    "CascadeStage",
    "PowerGainRule",
    "EnfComparisonReport",
    "capasso_enf",
    "capasso_enf_delta",
    "capasso_enf_heterogeneous",
    "capasso_enf_moments",
    "stepwise_enf",
    "friis_total",
    "cascade_total_gain_variant",
    "mean_staircase_gain",
    "stages_from_profile",
    "compare",
]


def _check_probability(value: float, name: str = "p") -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must satisfy 0 <= {name} <= 1, got {value!r}")
    return value


def _check_steps(n: int) -> int:
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise DomainError(f"step count n must be a non-negative integer, got {n!r}")
    return int(n)


@dataclass(frozen=True)
class StepProfile:
    """Per-step ionization probabilities of a staircase, first step first.

    The non-ionizing fraction ``delta = 1 - p`` is only ever derived.
    """

    probs: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        probs = tuple(_check_probability(p, "p_x") for p in self.probs)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def homogeneous(cls, p: float, n: int) -> "StepProfile":
        p = _check_probability(p)
        return cls((p,) * _check_steps(n))

    @classmethod
    def from_deltas(cls, deltas: Iterable[float]) -> "StepProfile":
        return cls(tuple(1.0 - _check_probability(d, "delta") for d in deltas))

    @property
    def n(self) -> int:
        return len(self.probs)

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(1.0 - p for p in self.probs)

    @property
    def is_homogeneous(self) -> bool:
        return len(set(self.probs)) <= 1

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class StepMoments:
    mean_gain: float
    var_gain: float

    def __post_init__(self) -> None:
        if not self.mean_gain >= 1.0:
            raise DomainError(f"mean_gain must be >= 1, got {self.mean_gain!r}")
        if not self.var_gain >= 0.0:
            raise DomainError(f"var_gain must be >= 0, got {self.var_gain!r}")

    @classmethod
    def from_probability(cls, p: float) -> "StepMoments":
        """Exact Bernoulli moments of a {1, 2}-valued step gain."""
        p = _check_probability(p)
        return cls(1.0 + p, p * (1.0 - p))


class PowerGainRule(str, enum.Enum):
    """How a stage's power gain is derived from its electron gain M."""

    SQUARED = "M2"  # G = M**2
    LINEAR = "M"  # G = M

    def power_gain(self, gain: float) -> float:
        return gain * gain if self is PowerGainRule.SQUARED else gain

    @classmethod
    def parse(cls, value: "PowerGainRule | str") -> "PowerGainRule":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("^", "").replace("²", "2")
        for rule in cls:
            if key == rule.value or key == rule.name:
                return rule
        raise DomainError(f"unknown power-gain rule {value!r}; use 'M2' or 'M'")


@dataclass(frozen=True)
class CascadeStage:
    noise_factor: float
    gain: float
    power_gain: float

    def __post_init__(self) -> None:
        if not self.noise_factor >= 1.0:
            raise DomainError(f"noise_factor must be >= 1, got {self.noise_factor!r}")
        if not self.gain > 0.0:
            raise DomainError(f"gain must be > 0, got {self.gain!r}")
        if not self.power_gain > 0.0:
            raise DomainError(f"power_gain must be > 0, got {self.power_gain!r}")

    @classmethod
    def from_step(
        cls, p: float, rule: PowerGainRule | str = PowerGainRule.SQUARED
    ) -> "CascadeStage":
        gain = 1.0 + _check_probability(p)
        return cls(stepwise_enf(p), gain, PowerGainRule.parse(rule).power_gain(gain))


def _one_minus_inverse_power(base: float, n: int) -> float:
    # 1 - base**-n without cancellation when base is close to 1
    return -math.expm1(-n * math.log(base))


def capasso_enf(p: float, n: int) -> float:
    """Total ENF ``1 + (1-p)/(1+p) * (1 - (1+p)**-n)``, homogeneous steps."""
    p = _check_probability(p)
    n = _check_steps(n)
    if n == 0 or p == 0.0 or p == 1.0:
        return 1.0
    return 1.0 + (1.0 - p) / (1.0 + p) * _one_minus_inverse_power(1.0 + p, n)


def capasso_enf_delta(delta: float, n: int) -> float:
    """Same quantity as :func:`capasso_enf`, parameterized by ``delta = 1 - p``."""
    delta = _check_probability(delta, "delta")
    n = _check_steps(n)
    if n == 0 or delta == 0.0 or delta == 1.0:
        return 1.0
    step_gain = 2.0 - delta
    return 1.0 + delta / step_gain * _one_minus_inverse_power(step_gain, n)


def capasso_enf_heterogeneous(profile: StepProfile | Sequence[float]) -> float:
    """Total ENF when every step has its own ionization probability.

    Step ``i`` contributes ``var(m_i) / (<m_i>**2 * prod_{j<i} <m_j>)``.
    """
    if not isinstance(profile, StepProfile):
        profile = StepProfile(tuple(profile))
    total = 1.0
    upstream_gain = 1.0
    for p in profile.probs:
        mean = 1.0 + p
        total += p * (1.0 - p) / (mean * mean * upstream_gain)
        upstream_gain *= mean
    return total


def capasso_enf_moments(moments: StepMoments, n: int) -> float:
    """Total ENF from the common mean and variance of the step gain."""
    n = _check_steps(n)
    mean, var = moments.mean_gain, moments.var_gain
    if n == 0 or var == 0.0:
        return 1.0
    if mean <= 1.0:
        raise DomainError(
            "mean_gain must exceed 1 when var_gain > 0 (formula divides by mean_gain - 1)"
        )
    return 1.0 + var / (mean * (mean - 1.0)) * _one_minus_inverse_power(mean, n)


def stepwise_enf(p: float) -> float:
    """ENF of a single step: ``1 + p(1-p)/(1+p)**2``."""
    p = _check_probability(p)
    return 1.0 + p * (1.0 - p) / ((1.0 + p) * (1.0 + p))


def _cascade(stages: Sequence[CascadeStage], attr: str) -> float:
    stages = list(stages)
    if not stages:
        return 1.0
    total = stages[0].noise_factor
    upstream = 1.0
    for prev, stage in zip(stages, stages[1:]):
        g = getattr(prev, attr)
        if not g > 0.0:
            raise DomainError(f"{attr} must be > 0, got {g!r}")
        upstream *= g
        total += (stage.noise_factor - 1.0) / upstream
    return total


def friis_total(stages: Sequence[CascadeStage]) -> float:
    """Friis cascade noise factor, dividing by the upstream *power* gains."""
    return _cascade(stages, "power_gain")


def cascade_total_gain_variant(stages: Sequence[CascadeStage]) -> float:
    """Friis-shaped cascade that divides by the upstream electron gains instead."""
    return _cascade(stages, "gain")


def mean_staircase_gain(profile: StepProfile | Sequence[float]) -> float:
    if not isinstance(profile, StepProfile):
        profile = StepProfile(tuple(profile))
    return math.prod(1.0 + p for p in profile.probs)


def stages_from_profile(
    profile: StepProfile, rule: PowerGainRule | str = PowerGainRule.SQUARED
) -> list[CascadeStage]:
    rule = PowerGainRule.parse(rule)
    return [CascadeStage.from_step(p, rule) for p in profile.probs]


@dataclass(frozen=True)
class EnfComparisonReport:
    profile: StepProfile
    power_gain_rule: PowerGainRule
    capasso: float
    friis_power_gain: float
    friis_gain_variant: float
    mean_staircase_gain: float
    abs_discrepancy: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "abs_discrepancy", abs(self.capasso - self.friis_power_gain)
        )

    def as_dict(self) -> dict[str, float]:
        return {
            "capasso": self.capasso,
            "friis_power_gain": self.friis_power_gain,
            "friis_gain_variant": self.friis_gain_variant,
            "mean_gain": self.mean_staircase_gain,
            "abs_discrepancy": self.abs_discrepancy,
        }


IDENTITY_RTOL = 1e-12


def compare(
    profile: StepProfile, power_gain_rule: PowerGainRule | str = PowerGainRule.SQUARED
) -> EnfComparisonReport:
    """Evaluate the Capasso form and both cascade compositions on one profile."""
    rule = PowerGainRule.parse(power_gain_rule)
    stages = stages_from_profile(profile, rule)
    report = EnfComparisonReport(
        profile=profile,
        power_gain_rule=rule,
        capasso=capasso_enf_heterogeneous(profile),
        friis_power_gain=friis_total(stages),
        friis_gain_variant=cascade_total_gain_variant(stages),
        mean_staircase_gain=mean_staircase_gain(profile),
    )
    if not math.isclose(report.capasso, report.friis_gain_variant, rel_tol=IDENTITY_RTOL):
        raise AssertionError(
            f"gain-variant cascade {report.friis_gain_variant!r} departs from "
            f"closed form {report.capasso!r}"
        )
    return report
