"""Iterated local growth of approximate squeezed cat states.

One growth step interferes two copies of the current state on a balanced
beam splitter and accepts the event when a homodyne measurement of one
output lands in |x| ≤ Δ.  Accepted states double their polynomial degree;
after m steps from single photons the Δ→0 limit is the pure state
x^{2^m} e^{-x²/2} and finite Δ trades fidelity for acceptance probability.

The step is evaluated as one fused contraction: the beam-splitter monomial
transfer tensor is pre-multiplied by the closed-form Gaussian moments of the
measured output (interval moments for its position, full-line for its
momentum), so a step is a single einsum over the two input coefficient
matrices — no intermediate two-mode state is materialized.

Rates follow the multiplexed-source bookkeeping R = (3/2)^{m-1}·Π P_k in
units of the input-state repetition rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .gaussint import interval_moments
from .phasespace import PhaseSpaceState, _flush, _trim, pair_rotation, single_photon
from .targets import squeezed_single_cat

__all__ = [
    "GrowthSchedule",
    "GrowthResult",
    "ScheduleScan",
    "grow_step",
    "grow_step_pair",
    "grow_schedule",
    "growth_rate",
    "optimize_schedule",
    "rate_ratio_at",
    "delta_grid",
]

_BALANCED = math.pi / 4.0


@dataclass(frozen=True)
class GrowthSchedule:
    """Per-level acceptance half-widths Δ_1..Δ_m (non-decreasing) plus the
    success probabilities filled in by simulation."""

    deltas: tuple[float, ...]
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.deltas:
            raise ValueError("schedule needs at least one level")
        if any(d <= 0 for d in self.deltas):
            raise ValueError("acceptance half-widths must be positive")
        if any(b < a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("acceptance schedule must be non-decreasing")
        if self.probs and len(self.probs) != len(self.deltas):
            raise ValueError("probability vector length must match deltas")
        if any(not 0.0 < p <= 1.0 for p in self.probs):
            raise ValueError("success probabilities must lie in (0, 1]")

    @property
    def m(self) -> int:
        return len(self.deltas)

    def with_probs(self, probs: Iterable[float]) -> "GrowthSchedule":
        return GrowthSchedule(self.deltas, tuple(float(p) for p in probs))


@dataclass(frozen=True)
class GrowthResult:
    """Final grown state with its schedule, fidelity against the squeezed
    cat target at the same level, and rate in source-repetition units."""

    state: PhaseSpaceState
    schedule: GrowthSchedule
    fidelity: float
    rate: float


@dataclass(frozen=True)
class ScheduleScan:
    """Outcome of a grid scan: the non-dominated (fidelity, rate) frontier
    and the uniform-Δ comparison subfamily, both sorted by fidelity."""

    pareto: tuple[GrowthResult, ...]
    uniform: tuple[GrowthResult, ...]


@lru_cache(maxsize=1024)
def _measured_pair_transfer(d1: int, d2: int, half_width: float) -> np.ndarray:
    """T[a, b, k]: combine variable powers a (first copy) and b (second copy)
    under the balanced rotation and integrate the measured output over
    [-half_width, half_width]; k indexes the kept output's power."""
    r3 = pair_rotation(d1, d2, _BALANCED)
    moments = interval_moments(d1 + d2, half_width)
    out = np.zeros_like(r3)
    ks = np.arange(d1 + d2 + 1)
    for a in range(d1 + 1):
        rem = a + np.arange(d2 + 1)[:, None] - ks[None, :]
        # r3 is already zero where k exceeds a+b, so clipping is safe
        block = np.where(rem >= 0, moments[np.clip(rem, 0, None)], 0.0)
        out[a] = r3[a] * block
    return out


def grow_step_pair(
    first: PhaseSpaceState, second: PhaseSpaceState, half_width: float
) -> tuple[float, PhaseSpaceState]:
    """One growth step on two (possibly different) one-mode input states.

    Returns (acceptance probability, normalized accepted state).
    """
    if first.mode_count != 1 or second.mode_count != 1:
        raise ValueError("growth combines one-mode states")
    if not half_width > 0:
        raise ValueError("acceptance half-width must be positive")
    wa, wb = first.coeffs, second.coeffs
    x_transfer = _measured_pair_transfer(wa.shape[0] - 1, wb.shape[0] - 1, float(half_width))
    p_transfer = _measured_pair_transfer(wa.shape[1] - 1, wb.shape[1] - 1, math.inf)
    raw = np.einsum("ij,IJ,iIk,jJl->kl", wa, wb, x_transfer, p_transfer, optimize=True)
    accepted = PhaseSpaceState(_trim(_flush(raw)))
    prob = accepted.norm_integral()
    if not prob > 0.0:
        raise ValueError("acceptance probability vanished; widen the interval")
    return float(prob), accepted.normalized()


def grow_step(state: PhaseSpaceState, half_width: float) -> tuple[float, PhaseSpaceState]:
    """One growth step on two copies of ``state`` (Δ = ``half_width``)."""
    return grow_step_pair(state, state, half_width)


def grow_schedule(
    start: PhaseSpaceState | None, schedule: GrowthSchedule
) -> GrowthResult:
    """Run the full m-level growth chain and score the result.

    ``start`` defaults to a single photon.  Fidelity is measured against the
    squeezed single-mode cat at level m.
    """
    state = single_photon() if start is None else start
    probs: list[float] = []
    for delta in schedule.deltas:
        p, state = grow_step(state, delta)
        probs.append(p)
    done = schedule.with_probs(probs)
    fidelity = squeezed_single_cat(done.m).overlap_with(state)
    return GrowthResult(state=state, schedule=done, fidelity=fidelity, rate=growth_rate(done))


def growth_rate(schedule: GrowthSchedule) -> float:
    """R = (3/2)^{m-1} · P_1 ··· P_m in source-repetition-rate units."""
    if not schedule.probs:
        raise ValueError("schedule probabilities not filled; run the chain first")
    return 1.5 ** (schedule.m - 1) * float(np.prod(schedule.probs))


def delta_grid(points: int = 25, lo: float = 0.01, hi: float = 2.0) -> tuple[float, ...]:
    """Geometric acceptance-width grid shared by the optimizer and the CLI."""
    return tuple(float(v) for v in np.geomspace(lo, hi, points))


def optimize_schedule(
    m: int,
    fidelity_floor: float,
    grid: Sequence[float] | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> ScheduleScan:
    """Scan all non-decreasing Δ schedules on the grid and keep the Pareto
    frontier of (fidelity, rate) among those with fidelity ≥ ``fidelity_floor``.

    The scan walks the monotone schedules depth-first so every grid prefix is
    grown exactly once; the uniform-Δ subfamily is collected along the way.
    ``progress`` is called with (leaves done, leaves total) after each
    top-level subtree completes.
    """
    if not 1 <= m <= 5:
        raise ValueError("growth levels are capped at m = 5")
    values = tuple(grid) if grid is not None else delta_grid()
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("grid values must be strictly increasing")
    target = squeezed_single_cat(m)
    root = single_photon()
    # the frontier is reduced incrementally so only non-dominated states are
    # ever held (the full leaf set at m = 5 would not fit in memory)
    frontier: list[GrowthResult] = []
    uniform: list[GrowthResult] = []
    total = math.comb(len(values) + m - 1, m)
    done = 0

    def consider(result: GrowthResult) -> None:
        for kept in frontier:
            if kept.fidelity >= result.fidelity and kept.rate >= result.rate:
                return
        frontier[:] = [
            kept
            for kept in frontier
            if not (result.fidelity >= kept.fidelity and result.rate >= kept.rate)
        ]
        frontier.append(result)

    def walk(state: PhaseSpaceState, level: int, start: int, deltas: tuple[float, ...], probs: tuple[float, ...]):
        nonlocal done
        for idx in range(start, len(values)):
            p, nxt = grow_step(state, values[idx])
            d = deltas + (values[idx],)
            q = probs + (p,)
            if level + 1 == m:
                done += 1
                fid = target.overlap_with(nxt)
                sched = GrowthSchedule(d, q)
                result = GrowthResult(nxt, sched, fid, growth_rate(sched))
                if len(set(d)) == 1:
                    uniform.append(result)
                if fid >= fidelity_floor:
                    consider(result)
            else:
                walk(nxt, level + 1, idx, d, q)
            if level == 0 and progress is not None:
                progress(done, total)

    walk(root, 0, 0, (), ())
    if not frontier:
        raise ValueError(f"no schedule on the grid reaches fidelity {fidelity_floor}")
    return ScheduleScan(
        pareto=tuple(sorted(frontier, key=lambda r: r.fidelity)),
        uniform=tuple(sorted(uniform, key=lambda r: r.fidelity)),
    )


def rate_ratio_at(scan: ScheduleScan, fidelity: float) -> float:
    """Optimal-to-uniform rate ratio with both curves log-interpolated at the
    requested fidelity."""
    num = _interp_rate(scan.pareto, fidelity)
    den = _interp_rate(scan.uniform, fidelity)
    if num is None or den is None:
        raise ValueError(f"fidelity {fidelity} outside both curves' span")
    return num / den


def _interp_rate(results: Sequence[GrowthResult], fidelity: float) -> float | None:
    pts = sorted((r.fidelity, r.rate) for r in results)
    if not pts:
        return None
    if fidelity <= pts[0][0]:
        return pts[0][1]
    for (f1, r1), (f2, r2) in zip(pts, pts[1:]):
        if f1 <= fidelity <= f2:
            w = (fidelity - f1) / (f2 - f1)
            return math.exp((1.0 - w) * math.log(r1) + w * math.log(r2))
    return None
