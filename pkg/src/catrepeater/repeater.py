"""End-to-end repeater model: fidelity-fit tables, full-pipeline simulation,
rate bookkeeping, and the fidelity-constrained rate optimizer.

Stations every L0 = L/2^n km grow approximate cat states locally from
heralded single photons, connect neighbouring stations by non-local photon
subtraction through lossy fiber, and fuse segments by n levels of
entanglement swapping.  The protocol clocks are the source repetition rate
(growth) and the classical-communication time L0/c (connection and swaps).

Rate bookkeeping
----------------
``total_rate`` uses the memory-assisted recursion

    T_0 = (T_cat + L0/c) / P_connect_both
    T_k = ((3/2)·T_{k-1} + L0/c) / P_k        for k = 1..n

with T_cat = 1/(R_growth·r_rep·p_pair) the production time of one grown cat
per station (stations work in parallel; R_growth is in input-photon units,
so the input supply rate r_rep·p_pair converts it to seconds), P_connect_both
counting both phase-equivalent heralding branches, and the standard 3/2
accounting for waiting on two independent halves at each swap level.
Expanded, the growth term is amortized over every retry of every level above
it — the dominant cost for MHz-class sources — while the communication terms
reduce to Σ (3/2)^k·(L0/c)/P_k when growth is fast.  The recursion lives in
this one function so alternates can be swapped in.

Two-photon contamination
------------------------
A heralded single photon carries a two-photon component of conditional
weight ~ p_pair (the herald cannot resolve photon number).  Its effect on
the distributed state is linear in p_pair:

    F = (1 − τ·p_pair)·F1 + τ·p_pair·F2,   τ = (f2/4)·2^{m+n+1},

where 2^{m+n+1} counts the input photons consumed per distributed pair and
f2 is the acceptance-probability ratio of a growth chain seeded with one
two-photon input versus all single-photon inputs.  F2 is evaluated by
rerunning the connection with the contaminated grown state on one side; the
segment-level deficit carries through the swap chain linearly because both
the conditioning maps and the fidelity are linear in the density matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .connect import ConnectionResult, connect
from .growth import (
    GrowthResult,
    GrowthSchedule,
    delta_grid,
    grow_schedule,
    grow_step_pair,
    optimize_schedule,
)
from .phasespace import PhaseSpaceState, fock, single_photon
from .swap import nested_swap
from .targets import ideal_grown, psi_m

ETA_SPD = 0.5  # single-photon-detector efficiency
L_ATT = 20.0  # fiber attenuation length, km
LIGHT_SPEED = 2.0e5  # classical/quantum signal speed in fiber, km/s

# Published comparison value for the earlier protocol variant (pairs/min at a
# 1 MHz source over 1000 km) — a literature constant, not recomputed here.
PREVIOUS_PROTOCOL_RATE = 0.004

_MATRIX_KEYS = ("a", "b", "c", "d", "e", "f", "g", "h")
_VECTOR_KEYS = ("i", "j", "k", "l")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RepeaterConfig:
    """One operating point of the full protocol.

    ``deltas`` is the growth acceptance schedule (length = m), ``r`` the
    connection tap reflectivity, ``delta_swap`` the swap acceptance
    half-width, ``p_pair`` the heralded pair-production probability and
    ``rep_rate`` the source repetition rate in Hz.
    """

    length_km: float
    n: int
    m: int
    deltas: tuple[float, ...]
    r: float
    delta_swap: float
    p_pair: float
    rep_rate: float
    eta_spd: float = ETA_SPD
    l_att: float = L_ATT
    light_speed: float = LIGHT_SPEED

    def __post_init__(self):
        if not self.length_km > 0:
            raise ValueError("total length must be positive")
        if not 0 <= self.n <= 4:
            raise ValueError("swap levels are capped at n = 4")
        if not 1 <= self.m <= 3:
            raise ValueError("growth depth is capped at m = 3 in the full protocol")
        if len(self.deltas) != self.m:
            raise ValueError("growth schedule length must equal m")
        if not 0.0 < self.r < 1.0:
            raise ValueError("tap reflectivity must lie in (0, 1)")
        if not self.delta_swap > 0:
            raise ValueError("swap half-width must be positive")
        if not 0.0 < self.p_pair < 1.0:
            raise ValueError("pair-production probability must lie in (0, 1)")
        if not self.rep_rate > 0:
            raise ValueError("repetition rate must be positive")
        if not (0.0 < self.eta_spd <= 1.0 and self.l_att > 0 and self.light_speed > 0):
            raise ValueError("channel constants out of range")

    @property
    def segment_km(self) -> float:
        return self.length_km / 2**self.n

    @property
    def comm_time(self) -> float:
        """Classical-communication time per elementary segment, seconds."""
        return self.segment_km / self.light_speed

    @property
    def schedule(self) -> GrowthSchedule:
        return GrowthSchedule(self.deltas)


def channel_efficiency(config: RepeaterConfig) -> float:
    """η = η_spd·e^{−L0/(2·L_att)}: detector times one-arm fiber loss."""
    return config.eta_spd * math.exp(-config.segment_km / (2.0 * config.l_att))


# ---------------------------------------------------------------------------
# fidelity-fit tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitTables:
    """Constants of the per-parameter fidelity fits.

    Matrices are indexed (n = 0..4, m = 1..3); NaN marks combinations the
    fit does not cover (serialized as a dash).  Vectors i, j, k are indexed
    by n, vector l by m.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    l: np.ndarray

    def entry(self, key: str, n: int, m: int) -> float:
        if key not in _MATRIX_KEYS:
            raise KeyError(f"unknown fit matrix {key!r}")
        if not (0 <= n <= 4 and 1 <= m <= 3):
            raise LookupError(f"fit tables cover n = 0..4, m = 1..3, not (n={n}, m={m})")
        value = float(getattr(self, key)[n, m - 1])
        if math.isnan(value):
            raise LookupError(f"the {key}-fit has no entry at (n={n}, m={m})")
        return value

    # -- the fit forms ------------------------------------------------------

    def connect_fidelity(self, n: int, m: int, u: float) -> float:
        """F(u) with u = P_connect/η; valid for u ≪ 1."""
        return 1.0 - self.entry("a", n, m) * u * u - self.entry("b", n, m) * u

    def growth_fidelity(self, n: int, m: int, r_growth: float) -> float:
        """F(R_growth) with R_growth in input-photon rate units."""
        return 1.0 - self.entry("c", n, m) * math.exp(self.entry("d", n, m) * r_growth)

    def swap_interval_fidelity(self, n: int, m: int, delta: float) -> float:
        """F(δ): two-exponential for m ≤ 2, linear for m = 3.

        The intercept carries the nesting deficit, so this is an absolute
        level, not a correction factor.
        """
        e_val = self.entry("e", n, m)
        f_val = self.entry("f", n, m)
        if m == 3:
            return e_val + f_val * delta
        return e_val * math.exp(f_val * delta) + self.entry("g", n, m) * math.exp(
            self.entry("h", n, m) * delta
        )

    def depth_fidelity(self, n: int, m: int) -> float:
        """The m-quadratic baseline fit; reporting only (see analytic_fidelity)."""
        if not 0 <= n <= 4:
            raise LookupError(f"depth fit covers n = 0..4, not {n}")
        return float(self.i[n] + self.j[n] * m * m + self.k[n] * m)

    def nesting_fidelity(self, m: int, n: int) -> float:
        """1 − l̃_m·n²: fidelity vs swap depth at ideal parameters."""
        if not 1 <= m <= 3:
            raise LookupError(f"nesting fit covers m = 1..3, not {m}")
        return 1.0 - float(self.l[m - 1]) * n * n

    # -- (de)serialization --------------------------------------------------

    def serialize(self) -> str:
        lines = [
            "# Fidelity-fit constants for the analytic repeater model.",
            "# Matrices: rows are swap depth n = 0..4, columns growth depth",
            "# m = 1..3; a dash marks a combination the fit does not cover.",
            "# Vectors i, j, k are indexed by n; vector l by m.",
        ]
        for key in _MATRIX_KEYS + _VECTOR_KEYS:
            table = np.atleast_2d(getattr(self, key))
            lines.append(f"[{key}]")
            for row in table:
                lines.append(" ".join("-" if math.isnan(v) else repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "FitTables":
        sections: dict[str, list[list[float]]] = {}
        current: list[list[float]] | None = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = sections.setdefault(line[1:-1], [])
                continue
            if current is None:
                raise ValueError(f"constants before any section header: {line!r}")
            current.append([math.nan if tok == "-" else float(tok) for tok in line.split()])
        missing = [k for k in _MATRIX_KEYS + _VECTOR_KEYS if k not in sections]
        if missing:
            raise ValueError(f"constants file lacks sections: {missing}")
        fields: dict[str, np.ndarray] = {}
        for key in _MATRIX_KEYS:
            table = np.array(sections[key], dtype=float)
            if table.shape != (5, 3):
                raise ValueError(f"matrix [{key}] must be 5x3, got {table.shape}")
            fields[key] = table
        for key in _VECTOR_KEYS:
            vec = np.array(sections[key], dtype=float).ravel()
            want = 3 if key == "l" else 5
            if vec.shape != (want,):
                raise ValueError(f"vector [{key}] must have length {want}")
            fields[key] = vec
        return cls(**fields)


@lru_cache(maxsize=1)
def load_fit_tables() -> FitTables:
    """The packaged constants file."""
    text = resources.files("catrepeater").joinpath("data/fidelity_fit_constants.txt").read_text()
    return FitTables.parse(text)


# ---------------------------------------------------------------------------
# analytic fidelity model (optimizer seed)
# ---------------------------------------------------------------------------

def _swap_row_usable(fits: FitTables, n: int, m: int) -> bool:
    """Whether the printed δ-fit row is numerically meaningful.

    Several rows are differences of two huge, nearly cancelling exponentials
    whose printed precision destroys the balance; detect those by checking
    the intercept against the independent nesting fit.
    """
    try:
        intercept = fits.swap_interval_fidelity(n, m, 0.0)
    except LookupError:
        return False
    return 0.0 < intercept <= 1.001 and abs(intercept - fits.nesting_fidelity(m, n)) <= 0.1


def analytic_fidelity(
    config: RepeaterConfig,
    fits: FitTables,
    *,
    f2_ratio: float = 1.0,
    two_photon_drop: float = 0.5,
) -> float:
    """Composite fit-based fidelity estimate, used only to seed the search.

    Composition is a product of three factors — swap/nesting level S(n, m, δ),
    growth factor and connection factor — followed by the two-photon mix.
    S uses the δ-fit's absolute level where its printed constants are usable
    (their intercepts already carry the nesting deficit) and falls back to
    the pure nesting form otherwise.  The m-quadratic baseline duplicates the
    same information (and exceeds 1 for n ≥ 1, m ≥ 2), so it is exposed via
    ``FitTables.depth_fidelity`` but not multiplied in.

    ``f2_ratio`` and ``two_photon_drop`` (≈ F1 − F2) default to pessimistic
    round numbers; callers holding measured values may pass them in.
    """
    n, m = config.n, config.m
    growth = _growth_result(config.deltas)
    factor = fits.growth_fidelity(n, m, growth.rate)
    u = _connect_unit_slope(m) * config.r
    factor *= fits.connect_fidelity(n, m, u)
    if n > 0:
        if _swap_row_usable(fits, n, m):
            factor *= fits.swap_interval_fidelity(n, m, config.delta_swap)
        else:
            factor *= fits.nesting_fidelity(m, n)
    weight = (f2_ratio / 4.0) * 2 ** (m + n + 1) * config.p_pair
    return factor - min(1.0, weight) * two_photon_drop


# ---------------------------------------------------------------------------
# cached pipeline stages
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _growth_result(deltas: tuple[float, ...]) -> GrowthResult:
    return grow_schedule(None, GrowthSchedule(deltas))


@lru_cache(maxsize=64)
def _perturbed_growth(deltas: tuple[float, ...]) -> tuple[float, PhaseSpaceState]:
    """(f2, grown state) for a growth chain seeded with one two-photon input.

    The contaminated branch is merged with clean partial products at every
    level, mirroring one bad leaf in the binary growth tree.
    """
    clean = single_photon()
    pert = fock(2)
    ratio = 1.0
    for delta in deltas:
        q, next_clean = grow_step_pair(clean, clean, delta)
        p, pert = grow_step_pair(pert, clean, delta)
        ratio *= p / q
        clean = next_clean
    return ratio, pert


@lru_cache(maxsize=256)
def _segment(deltas: tuple[float, ...], r: float, eta: float) -> ConnectionResult:
    grown = _growth_result(deltas)
    return connect(grown.state, grown.state, r, eta, level=len(deltas))


@lru_cache(maxsize=256)
def _perturbed_segment(deltas: tuple[float, ...], r: float, eta: float) -> ConnectionResult:
    grown = _growth_result(deltas)
    _, pert = _perturbed_growth(deltas)
    return connect(pert, grown.state, r, eta, level=len(deltas))


@lru_cache(maxsize=8)
def _connect_unit_slope(m: int) -> float:
    """dP_connect/dr at r → 0 for ideal inputs (η = 1)."""
    probe = 1e-3
    return connect(ideal_grown(m), ideal_grown(m), probe, 1.0, level=m).p_connect / probe


# ---------------------------------------------------------------------------
# full-pipeline simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RepeaterSample:
    """Monte-Carlo estimate of one operating point, plus rate ingredients."""

    fidelity: float
    sem: float
    f_single: float
    f_double: float
    tau: float
    f2_ratio: float
    p_connect: float
    p_connect_both: float
    swap_probs: tuple[float, ...]
    growth_rate: float
    segment_fidelity: float
    eta: float


def simulate_repeater(
    config: RepeaterConfig, rng: np.random.Generator, samples: int = 100
) -> RepeaterSample:
    """Run the full pipeline at one operating point.

    Growth and connection are exact; the swap chain is Monte-Carlo averaged
    over ``samples`` independent chains (the per-level acceptance
    probabilities are averaged over the same chains).  The two-photon mix is
    applied on top with the measured f2 and segment-level F2.
    """
    if samples < 1:
        raise ValueError("at least one chain sample is required")
    eta = channel_efficiency(config)
    seg = _segment(config.deltas, config.r, eta)
    growth = _growth_result(config.deltas)
    if config.n == 0:
        f1, sem = seg.fidelity, 0.0
        swap_probs: tuple[float, ...] = ()
    else:
        fids = np.empty(samples)
        probs = np.zeros(config.n)
        for idx in range(samples):
            _, fids[idx], records = nested_swap(
                seg.state, config.n, config.delta_swap, config.m, rng
            )
            probs += [rec.p_accept for rec in records]
        f1 = float(fids.mean())
        sem = float(fids.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
        swap_probs = tuple(probs / samples)

    f2_ratio, _ = _perturbed_growth(config.deltas)
    seg2 = _perturbed_segment(config.deltas, config.r, eta)
    f_double = max(0.0, f1 - (seg.fidelity - seg2.fidelity))
    tau = (f2_ratio / 4.0) * 2 ** (config.m + config.n + 1)
    weight = tau * config.p_pair
    if weight > 1.0:
        raise ValueError(
            f"two-photon weight τ·p_pair = {weight:.3f} exceeds 1; "
            "the linear contamination model does not apply"
        )
    fidelity = (1.0 - weight) * f1 + weight * f_double
    return RepeaterSample(
        fidelity=fidelity,
        sem=(1.0 - weight) * sem,
        f_single=f1,
        f_double=f_double,
        tau=tau,
        f2_ratio=f2_ratio,
        p_connect=seg.p_connect,
        p_connect_both=seg.p_connect_both,
        swap_probs=swap_probs,
        growth_rate=growth.rate,
        segment_fidelity=seg.fidelity,
        eta=eta,
    )


def simulate_fidelity(
    config: RepeaterConfig, rng: np.random.Generator, samples: int = 100
) -> tuple[float, float]:
    """Mean distributed-state fidelity and its standard error."""
    sample = simulate_repeater(config, rng, samples)
    return sample.fidelity, sample.sem


def total_rate(config: RepeaterConfig, sample: RepeaterSample) -> float:
    """Distributed pairs per minute at this operating point.

    Implements the recursion documented in the module header; this is the
    single place where the time bookkeeping lives.
    """
    if sample.p_connect_both <= 0.0:
        raise ValueError("connection probability must be positive")
    if any(p <= 0.0 for p in sample.swap_probs):
        raise ValueError("swap acceptance probabilities must be positive")
    if len(sample.swap_probs) != config.n:
        raise ValueError("sample does not carry one acceptance per swap level")
    t_comm = config.comm_time
    t_cat = 1.0 / (sample.growth_rate * config.rep_rate * config.p_pair)
    t_total = (t_cat + t_comm) / sample.p_connect_both
    for p_level in sample.swap_probs:
        t_total = (1.5 * t_total + t_comm) / p_level
    return 60.0 / t_total


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizeResult:
    config: RepeaterConfig
    rate: float
    fidelity: float
    sem: float
    trace: tuple[dict, ...]


@lru_cache(maxsize=8)
def _frontier(m: int, coarse: bool) -> tuple[GrowthResult, ...]:
    """Growth Pareto frontier reused by every candidate at this depth."""
    points = 7 if coarse else 11
    grid = delta_grid(points=points, lo=0.03, hi=1.6)
    return optimize_schedule(m, 0.0, grid).pareto


class _StageModel:
    """Per-(n, m) stage tables for fast grid scoring.

    Every ingredient is simulated — the ideal-segment swap chain on a δ grid,
    the connection fidelity on a u grid, the growth imperfection along the
    Pareto frontier, and the two-photon factors — and grid points are scored
    by composing the resulting deficits additively.  The optimizer's winner
    is always re-verified with ``simulate_repeater``, so the additive
    approximation only steers the search.
    """

    def __init__(
        self,
        n: int,
        m: int,
        eta: float,
        rng: np.random.Generator,
        chain_samples: int,
        coarse: bool,
    ):
        self.n, self.m, self.eta = n, m, eta
        frontier = _frontier(m, coarse)
        step = max(1, len(frontier) // 8)
        picks = list(frontier[::step])
        if frontier[-1] not in picks:
            picks.append(frontier[-1])
        picks.sort(key=lambda g: g.rate)  # interpolation needs ascending rates
        self.growth_points = picks
        self.rates = np.array([g.rate for g in picks])

        # growth imperfection measured at the connection output (r → 0, η = 1),
        # plus a per-schedule p_connect/r secant so a target u maps back to the
        # beamsplitter reflectivity of *that* grown state, not the ideal one
        level_fids, slopes = [], []
        for g in picks:
            level_fids.append(connect(g.state, g.state, 1e-4, 1.0, level=m).fidelity)
            probe = connect(g.state, g.state, 2e-3, 1.0, level=m)
            slopes.append(probe.p_connect / 2e-3)
        self.pick_slopes = np.array(slopes)
        best = max(level_fids)
        self.growth_deficit = np.maximum(0.0, best - np.array(level_fids))

        # connection deficit vs u = p_connect/η on ideal inputs
        slope = _connect_unit_slope(m)
        self.u_grid = np.geomspace(5e-4, 0.12, 6)
        self.r_of_u = np.empty_like(self.u_grid)
        fids = np.empty_like(self.u_grid)
        for idx, u in enumerate(self.u_grid):
            res = connect(ideal_grown(m), ideal_grown(m), float(u / slope), 1.0, level=m)
            self.r_of_u[idx] = u / slope
            fids[idx] = res.fidelity
            self.u_grid[idx] = res.p_connect  # realized u at η = 1
        self.connect_deficit = np.maximum(0.0, fids[0] - fids)

        # ideal-segment swap chain vs δ
        if n == 0:
            self.delta_grid_pts = np.array([math.inf])
            self.chain_fidelity = np.array([1.0])
            self.chain_probs = np.ones((1, 0))
        else:
            deltas = (0.05, 0.3, 1.0, 2.2) if coarse else (0.02, 0.08, 0.2, 0.45, 1.0, 2.2)
            seg = psi_m(m)
            fid_rows, prob_rows = [], []
            for delta in deltas:
                fids_d = np.empty(chain_samples)
                probs_d = np.zeros(n)
                for idx in range(chain_samples):
                    _, fids_d[idx], records = nested_swap(seg, n, delta, m, rng)
                    probs_d += [rec.p_accept for rec in records]
                fid_rows.append(fids_d.mean())
                prob_rows.append(probs_d / chain_samples)
            self.delta_grid_pts = np.array(deltas)
            self.chain_fidelity = np.array(fid_rows)
            self.chain_probs = np.array(prob_rows)

        # two-photon factors along the frontier
        self.f2 = np.array([_perturbed_growth(g.schedule.deltas)[0] for g in picks])
        drops = []
        for g in picks:
            clean = connect(g.state, g.state, 1e-3, 1.0, level=m)
            _, pert = _perturbed_growth(g.schedule.deltas)
            dirty = connect(pert, g.state, 1e-3, 1.0, level=m)
            drops.append(max(0.0, clean.fidelity - dirty.fidelity))
        self.two_photon_drop = np.array(drops)

    # -- interpolators ------------------------------------------------------

    def _growth_index(self, rate: float) -> float:
        return float(np.interp(rate, self.rates, np.arange(len(self.rates))))

    def growth_deficit_at(self, rate: float) -> float:
        return float(np.interp(rate, self.rates, self.growth_deficit))

    def connect_deficit_at(self, u: float) -> float:
        return float(np.interp(u, self.u_grid, self.connect_deficit))

    def r_at(self, u: float) -> float:
        return float(np.interp(u, self.u_grid, self.r_of_u))

    def rate_index(self, rate: float) -> int:
        return int(np.argmin(np.abs(self.rates - rate)))

    def r_for(self, u: float, pick_idx: int) -> float:
        """Reflectivity hitting p_connect = u·η on the pick's grown state."""
        return float(min(0.5, u / self.pick_slopes[pick_idx]))

    def chain_fidelity_at(self, delta: float) -> float:
        return float(np.interp(delta, self.delta_grid_pts, self.chain_fidelity))

    def swap_probs_at(self, delta: float) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        out = np.empty(self.n)
        for k in range(self.n):
            out[k] = np.interp(delta, self.delta_grid_pts, self.chain_probs[:, k])
        return out

    def tau_at(self, rate: float) -> float:
        f2 = float(np.interp(rate, self.rates, self.f2))
        return (f2 / 4.0) * 2 ** (self.m + self.n + 1)

    def drop_at(self, rate: float) -> float:
        return float(np.interp(rate, self.rates, self.two_photon_drop))

    # -- scoring ------------------------------------------------------------

    def predict(self, rate: float, u: float, delta: float, p_pair: float) -> float:
        f = (
            self.chain_fidelity_at(delta)
            - self.growth_deficit_at(rate)
            - self.connect_deficit_at(u)
        )
        weight = min(1.0, self.tau_at(rate) * p_pair)
        return f - weight * self.drop_at(rate)

    def speed(
        self, cfg_time: float, rep_rate: float, rate: float, u: float, delta: float, p_pair: float
    ) -> float:
        """Pairs/min via the same recursion as ``total_rate``."""
        if self.tau_at(rate) * p_pair > 1.0:
            return 0.0
        t_cat = 1.0 / (rate * rep_rate * p_pair)
        t_total = (t_cat + cfg_time) / (2.0 * u * self.eta)
        for p_level in self.swap_probs_at(delta):
            if p_level <= 0.0:
                return 0.0
            t_total = (1.5 * t_total + cfg_time) / p_level
        return 60.0 / t_total


def _analytic_seed(
    n: int,
    m: int,
    fits: FitTables,
    eta: float,
    rep_rate: float,
    comm_time: float,
    f_floor: float,
) -> tuple[float, float, float, float]:
    """(R_growth, u, δ, p_pair) grid centers from the fit model.

    Allocates the fidelity budget above the nesting baseline across growth,
    connection and pair production by brute-forcing the Lagrange condition on
    a small simplex of splits, ranking with the same rate recursion (swap
    acceptance approximated at 0.45 per level).  δ has no usable analytic
    handle (see the fit sanity rules), so its center is a fixed mid value.
    """
    baseline = 1.0 - fits.nesting_fidelity(m, n)
    budget = max(0.02, 1.0 - f_floor - baseline)
    tau0 = 2 ** (m + n + 1) / 4.0
    best: tuple[float, tuple[float, float, float]] | None = None
    splits = [
        (wg, wc, 1.0 - wg - wc)
        for wg in (0.1, 0.2, 0.35, 0.5, 0.65)
        for wc in (0.1, 0.2, 0.35, 0.5, 0.65)
        if wg + wc <= 0.9
    ]
    for wg, wc, wp in splits:
        c_const = fits.entry("c", n, m)
        d_const = fits.entry("d", n, m)
        share = wg * budget
        r_growth = math.log(share / c_const) / d_const if share > c_const else 0.0
        r_growth = max(r_growth, 1e-4)
        u = min(0.12, wc * budget / fits.entry("b", n, m))
        p_pair = min(0.5 / tau0, wp * budget / (tau0 * 0.5))
        t_cat = 1.0 / (r_growth * rep_rate * p_pair)
        t_total = (t_cat + comm_time) / max(2.0 * u * eta, 1e-12)
        for _ in range(n):
            t_total = (1.5 * t_total + comm_time) / 0.45
        if best is None or t_total < best[0]:
            best = (t_total, (r_growth, u, p_pair))
    assert best is not None
    r_growth, u, p_pair = best[1]
    return r_growth, u, 0.2, p_pair


def _knob_grid(center: float, span: float, points: int, lo: float, hi: float) -> np.ndarray:
    center = min(max(center, lo), hi)
    return np.unique(
        np.clip(np.geomspace(center / span, center * span, points), lo, hi)
    )


def optimize(
    length_km: float,
    rep_rate: float,
    f_floor: float = 0.8,
    fits: FitTables | None = None,
    rng: np.random.Generator | None = None,
    *,
    quick: bool = False,
    analytic_seed: bool = True,
    samples: int | None = None,
    levels: Sequence[int] | None = None,
    depths: Sequence[int] | None = None,
    progress: Callable[[str], None] | None = None,
) -> OptimizeResult:
    """Maximize the distribution rate subject to fidelity ≥ ``f_floor``.

    For each (n, m) the search builds stage tables once, seeds a grid from
    the analytic fit model (5 points per knob, two 2×-shrinking rounds),
    scores the grid with the tables, and re-verifies the best candidates
    with the full pipeline until one meets the floor within Monte-Carlo
    error.  ``quick`` coarsens every table and halves the chain budget.
    ``analytic_seed=False`` centers the first grid on fixed broad defaults
    instead (the result should not move much — the grid does the real work).
    """
    if length_km <= 0:
        raise ValueError("total length must be positive")
    if not 0.0 < f_floor < 1.0:
        raise ValueError("fidelity floor must lie in (0, 1)")
    fits = fits or load_fit_tables()
    rng = rng or np.random.default_rng()
    chain_samples = samples or (30 if quick else 100)
    level_list = tuple(levels) if levels is not None else (0, 1, 2, 3, 4)
    depth_list = tuple(depths) if depths is not None else (1, 2, 3)

    say = progress or (lambda _msg: None)
    best: OptimizeResult | None = None
    trace: list[dict] = []

    def rate_bound(n: int, m: int) -> float:
        """Optimistic ceiling: best frontier rate, maximal knobs, lossless swaps."""
        probe = RepeaterConfig(length_km, n, m, (0.1,) * m, 1e-3, 0.1, 1e-4, rep_rate)
        eta = channel_efficiency(probe)
        r_best = max(g.rate for g in _frontier(m, quick))
        t_total = (1.0 / (r_best * rep_rate * 0.2) + probe.comm_time) / (2.0 * 0.12 * eta)
        for _ in range(n):
            t_total = (1.5 * t_total + probe.comm_time) / 0.55
        return 60.0 / t_total

    blocks = sorted(
        ((n, m) for n in level_list for m in depth_list),
        key=lambda nm: -rate_bound(*nm),
    )
    for n, m in blocks:
        record: dict = {"n": n, "m": m}
        trace.append(record)
        # quick infeasibility screens: nesting baseline and the rate ceiling
        ceiling = fits.nesting_fidelity(m, n)
        if ceiling < f_floor - 0.07:
            record["skipped"] = f"nesting baseline {ceiling:.3f} under the floor"
            continue
        if best is not None and rate_bound(n, m) < best.rate:
            record["skipped"] = "rate ceiling below the best verified rate"
            continue
        probe = RepeaterConfig(
            length_km, n, m, (0.1,) * m, 1e-3, 0.1, 1e-4, rep_rate
        )
        eta = channel_efficiency(probe)
        say(f"building stage tables for n={n}, m={m}")
        model = _StageModel(n, m, eta, rng, chain_samples, quick)

        if analytic_seed:
            r_growth, u, delta, p_pair = _analytic_seed(
                n, m, fits, eta, rep_rate, probe.comm_time, f_floor
            )
        else:
            r_growth, u, delta, p_pair = float(np.median(model.rates)), 0.03, 0.3, 1e-3
        record["seed"] = {"R": r_growth, "u": u, "delta": delta, "p_pair": p_pair}

        def rate_choices(center: float, span: float) -> np.ndarray:
            # the growth knob only takes frontier-pick values, so the stage
            # tables and the verified config agree exactly on R_growth
            rates = model.rates
            sel = rates[(rates >= center / span) & (rates <= center * span)]
            if sel.size < 3:
                anchor = float(np.clip(center, rates[0], rates[-1]))
                order = np.argsort(np.abs(np.log(rates / anchor)))
                sel = rates[np.sort(order[:3])]
            return np.unique(sel)

        span = 6.0 if not analytic_seed else 4.0
        combos: list[tuple[float, float, tuple[float, float, float, float]]] = []
        for _round in range(2):
            grids = (
                rate_choices(r_growth, span),
                _knob_grid(u, span, 5, model.u_grid[0], model.u_grid[-1]),
                _knob_grid(delta, span, 5, model.delta_grid_pts[0], model.delta_grid_pts[-1])
                if n > 0
                else np.array([delta]),
                _knob_grid(p_pair, span, 5, 1e-6, 0.2),
            )
            round_best: tuple[float, tuple[float, float, float, float]] | None = None
            for rg in grids[0]:
                for ug in grids[1]:
                    for dg in grids[2]:
                        for pg in grids[3]:
                            predicted = model.predict(rg, ug, dg, pg)
                            speed = model.speed(
                                probe.comm_time, rep_rate, rg, ug, dg, pg
                            )
                            combos.append((speed, predicted, (rg, ug, dg, pg)))
                            if predicted >= f_floor and (
                                round_best is None or speed > round_best[0]
                            ):
                                round_best = (speed, (rg, ug, dg, pg))
            if round_best is None:
                break
            r_growth, u, delta, p_pair = round_best[1]
            span = math.sqrt(span)
        combos.sort(key=lambda item: -item[0])

        # verify with the full pipeline; the additive stage model runs
        # optimistic at deficit-heavy corners, so each measurement
        # rescales all predicted deficits before the next pick
        verified: tuple[float, RepeaterConfig, RepeaterSample] | None = None
        best_knobs: tuple[float, float, float, float] | None = None
        fastest_fail: tuple[float, tuple[float, float, float, float]] | None = None
        scale = 1.0
        tried: set[tuple[float, float, float, float]] = set()
        attempts = 12 if n == 0 else 8  # chain-free verification is cheap
        for attempt in range(attempts):
            threshold = 1.0 - (1.0 - f_floor) / scale
            fresh = [c for c in combos if c[2] not in tried and c[0] > 0]
            if not fresh:
                break
            pick = next((c for c in fresh if c[1] >= threshold), None)
            if pick is None:
                # nothing qualifies under the rescaled deficits; probe the
                # most conservative remaining point instead of giving up
                pick = max(fresh, key=lambda c: c[1])
            tried.add(pick[2])
            rg, ug, dg, pg = pick[2]
            idx = model.rate_index(rg)
            config = RepeaterConfig(
                length_km,
                n,
                m,
                model.growth_points[idx].schedule.deltas,
                model.r_for(ug, idx),
                float(dg),
                float(pg),
                rep_rate,
            )
            say(
                f"verifying n={n}, m={m} candidate {attempt + 1} "
                f"(model rate {pick[0]:.2e}/min)"
            )
            sample = simulate_repeater(config, rng, chain_samples)
            observed = max(1e-4, 1.0 - sample.fidelity)
            expected = max(1e-4, 1.0 - pick[1])
            scale = min(5.0, max(0.8, observed / expected))
            if sample.fidelity >= f_floor - 2.0 * sample.sem:
                rate_here = total_rate(config, sample)
                if verified is None or rate_here > verified[0]:
                    verified = (rate_here, config, sample)
                    best_knobs = pick[2]
                if sample.fidelity - f_floor <= 0.02:
                    break  # already operating at the floor; stop refining
            else:
                speed_here = model.speed(probe.comm_time, rep_rate, *pick[2])
                if fastest_fail is None or speed_here > fastest_fail[0]:
                    fastest_fail = (speed_here, pick[2])
        # the shrunk grids can leave a hole between "passes with slack" and
        # "misses the floor"; bisect between the two measured endpoints so
        # the block operates as close to the floor as its knobs allow
        if verified is not None and fastest_fail is not None:
            lo = np.array(best_knobs, dtype=float)
            hi = np.array(fastest_fail[1], dtype=float)
            for _ in range(3):
                if verified[2].fidelity - f_floor <= 0.02:
                    break
                mid = np.sqrt(lo * hi)  # per-knob geometric midpoint
                idx = model.rate_index(float(mid[0]))
                config = RepeaterConfig(
                    length_km,
                    n,
                    m,
                    model.growth_points[idx].schedule.deltas,
                    model.r_for(float(mid[1]), idx),
                    float(mid[2]),
                    float(mid[3]),
                    rep_rate,
                )
                say(f"bisecting n={n}, m={m} toward the fidelity floor")
                sample = simulate_repeater(config, rng, chain_samples)
                if sample.fidelity >= f_floor - 2.0 * sample.sem:
                    rate_here = total_rate(config, sample)
                    if rate_here > verified[0]:
                        verified = (rate_here, config, sample)
                    lo = mid
                else:
                    hi = mid
        if verified is None:
            record["skipped"] = "verification never met the floor"
            continue
        rate, config, sample = verified
        record["verified"] = {
            "rate": rate,
            "fidelity": sample.fidelity,
            "sem": sample.sem,
            "config": {
                "deltas": list(config.deltas),
                "r": config.r,
                "delta_swap": config.delta_swap,
                "p_pair": config.p_pair,
            },
        }
        say(f"n={n}, m={m}: verified {rate:.3e} pairs/min at F={sample.fidelity:.4f}")
        if best is None or rate > best.rate:
            best = OptimizeResult(
                config=config,
                rate=rate,
                fidelity=sample.fidelity,
                sem=sample.sem,
                trace=(),
            )

    if best is None:
        raise RuntimeError(
            f"no configuration with n ≤ 4, m ≤ 3 meets fidelity ≥ {f_floor} at {length_km} km"
        )
    return replace(best, trace=tuple(trace))
