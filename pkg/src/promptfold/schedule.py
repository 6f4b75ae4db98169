"""Staged decay schedules mapping training iterations to (tau, k).

A schedule quantizes ``[0, T)`` into ``num_stages`` contiguous, near-equal
iteration ranges and assigns each stage a constant template keep rate ``tau``
and example count ``k``. Both series decay from their start values to the
configured endpoints along one of three shapes; explicit per-stage values can
override either series when a run needs stage values (such as 1 / 0.3 / 0)
that no closed-form shape produces.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

PATTERNS = ("linear", "exp", "inv_exp")


def _shape(pattern: str, u: float, lam: float) -> float:
    """Normalized decay progress g(u) with g(0) = 0 and g(1) = 1.

    ``linear`` moves at constant speed, ``exp`` decays fast early, and
    ``inv_exp`` decays slowly early; ``lam`` controls the curvature of the
    exponential pair.
    """
    if pattern == "linear":
        return u
    if pattern == "exp":
        return (1.0 - math.exp(-lam * u)) / (1.0 - math.exp(-lam))
    if pattern == "inv_exp":
        return (math.exp(lam * u) - 1.0) / (math.exp(lam) - 1.0)
    raise ValueError(f"unknown schedule pattern {pattern!r}; expected one of {PATTERNS}")


@dataclass(frozen=True)
class InternalizationSchedule:
    pattern: str
    total_iterations: int
    num_stages: int
    tau_start: float
    tau_final: float
    k_start: int
    lam: float
    stage_taus: tuple[float, ...]
    stage_ks: tuple[int, ...]
    boundaries: tuple[int, ...]

    def stage_of(self, t: int) -> int:
        if not 0 <= t < self.total_iterations:
            raise ValueError(
                f"iteration {t} outside [0, {self.total_iterations})"
            )
        return bisect_right(self.boundaries, t) - 1

    def at(self, t: int) -> tuple[float, int]:
        """Stage-constant ``(tau, k)`` for the stage containing iteration ``t``."""
        stage = self.stage_of(t)
        return self.stage_taus[stage], self.stage_ks[stage]

    def stage_range(self, stage: int) -> tuple[int, int]:
        return self.boundaries[stage], self.boundaries[stage + 1]

    def stage_values(self, stage: int) -> tuple[float, int]:
        return self.stage_taus[stage], self.stage_ks[stage]


def _validate_tau_stages(values: list[float], num_stages: int) -> None:
    if len(values) != num_stages:
        raise ValueError(
            f"tau_stages must have {num_stages} entries, got {len(values)}"
        )
    for value in values:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"tau stage value {value} outside [0, 1]")
    if any(b > a for a, b in zip(values, values[1:])):
        raise ValueError("tau_stages must be non-increasing")


def _validate_k_stages(values: list[int], num_stages: int) -> None:
    if len(values) != num_stages:
        raise ValueError(f"k_stages must have {num_stages} entries, got {len(values)}")
    for value in values:
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ValueError(f"k stage value {value!r} must be a non-negative integer")
    if any(b > a for a, b in zip(values, values[1:])):
        raise ValueError("k_stages must be non-increasing")
    if values[-1] != 0:
        raise ValueError("the final k stage must be 0")


def make_schedule(
    pattern: str,
    total_iterations: int,
    num_stages: int,
    tau_final: float,
    k_start: int,
    *,
    tau_start: float = 1.0,
    lam: float = 3.0,
    tau_stages: list[float] | None = None,
    k_stages: list[int] | None = None,
) -> InternalizationSchedule:
    """Build a stage-quantized schedule.

    Stage ``s`` evaluates the shape at ``u = s / (num_stages - 1)`` (``u = 0``
    for a single stage) giving ``tau(s) = tau_start + (tau_final - tau_start)
    * g(u)`` and ``k(s) = round_half_even(k_start * (1 - g(u)))``. The final
    stage is forced to exactly ``(tau_final, 0)``, which for a single-stage
    schedule takes precedence over the start values.
    """
    if num_stages < 1:
        raise ValueError(f"num_stages must be >= 1, got {num_stages}")
    if total_iterations < num_stages:
        raise ValueError(
            f"total_iterations ({total_iterations}) must be >= num_stages ({num_stages})"
        )
    if not 0.0 <= tau_final <= tau_start <= 1.0:
        raise ValueError(
            f"need 0 <= tau_final <= tau_start <= 1, got {tau_final} and {tau_start}"
        )
    if k_start < 0:
        raise ValueError(f"k_start must be >= 0, got {k_start}")
    if lam <= 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if pattern not in PATTERNS:
        raise ValueError(
            f"unknown schedule pattern {pattern!r}; expected one of {PATTERNS}"
        )

    if tau_stages is not None:
        _validate_tau_stages(list(tau_stages), num_stages)
        taus = [float(value) for value in tau_stages]
        tau_start, tau_final = taus[0], taus[-1]
    else:
        taus = []
        for stage in range(num_stages):
            u = stage / (num_stages - 1) if num_stages > 1 else 0.0
            taus.append(tau_start + (tau_final - tau_start) * _shape(pattern, u, lam))
        taus[-1] = tau_final

    if k_stages is not None:
        _validate_k_stages(list(k_stages), num_stages)
        ks = [int(value) for value in k_stages]
        k_start = ks[0]
    else:
        ks = []
        for stage in range(num_stages):
            u = stage / (num_stages - 1) if num_stages > 1 else 0.0
            ks.append(round(k_start * (1.0 - _shape(pattern, u, lam))))
        ks[-1] = 0

    boundaries = tuple(
        stage * total_iterations // num_stages for stage in range(num_stages + 1)
    )
    return InternalizationSchedule(
        pattern=pattern,
        total_iterations=total_iterations,
        num_stages=num_stages,
        tau_start=tau_start,
        tau_final=tau_final,
        k_start=k_start,
        lam=lam,
        stage_taus=tuple(taus),
        stage_ks=tuple(ks),
        boundaries=boundaries,
    )
