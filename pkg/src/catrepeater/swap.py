"""Entanglement swapping by dual homodyne detection.

One mode from each of two entangled pairs meets a balanced beam splitter;
the X̂ quadrature of one output and the P̂ quadrature of the other are
measured, and the swap is accepted when the position outcome satisfies
|x₀| ≤ δ.  The surviving outer modes then hold the swapped state.

The conditional state is computed exactly, but the joint four-mode tensor is
never materialized (at the deepest growth level it would hold 17⁸
coefficients).  Both homodyne kernels contract against each input factor
directly: for measured-pair powers (i, j), substituting outcome t into one
output port and integrating the other gives a closed-form polynomial in t,

    K[i, j](t) = Σ_k R[i, j, k] · t^k · I∞[i+j-k]   (X̂ port),

with R the balanced splitter's monomial transfer tensor and I∞ plain
Gaussian moments; the P̂ port uses the mirrored assignment.  What remains is
one small matrix product between the two sites' coefficient tensors.

Scoring uses the one-ebit family  A|00⟩ + C*|01⟩ + C|10⟩ − A*|11⟩  over the
grown basis (|0⟩ odd, |1⟩ even member).  Swapping two family members with
coefficients (A₁, C₁), (A₂, C₂) at position outcome x₀ produces (up to
normalization) a member with

    A = 𝔸 cosθ_p + 𝔹 sinθ_p,      C = ℂ cosθ_p + 𝔻 sinθ_p,
    𝔸 = 2(A₁A₂ − C₁*C₂),           𝔹 = iK(x₀)(A₁C₂ − C₁*A₂),
    ℂ = 2(C₁A₂ + A₁*C₂),           𝔻 = iK(x₀)(A₁*A₂ + C₁C₂),
    K(x₀) = 2 cosh(√2·x₀·(μ_m − μ̃_m)) · e^{-(μ_m − μ̃_m)²/2},

where θ_p stands in for √2·μ_m·p₀ and is optimized rather than read off the
momentum outcome.  The family member is maximally entangled for every
coefficient pair on the shell |A|² + |C|² = 1/2, so the fidelity is always
taken against a pure one-ebit state; only the *target* uses the
large-separation approximations behind the recursion — the swapped state
itself is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .gaussint import interval_moments
from .phasespace import PhaseSpaceState, PolyGaussDensity, _flush, _trim, pair_rotation
from .targets import complex_overlap, cross_wigner_matrix, grown_basis, mu_peak, mu_peak_alt

__all__ = [
    "SwapOutcome",
    "SwapLevelRecord",
    "SwapTargetCoeffs",
    "fold_coefficients",
    "swap_once",
    "swap_at",
    "success_probability",
    "target_fidelity",
    "mc_average_fidelity",
    "nested_swap",
]

_BALANCED = math.pi / 4.0
_THETA_GRID = 720
# guard against unbounded rejection loops when δ is tiny
MIN_ACCEPTANCE = 1e-6


# ---------------------------------------------------------------------------
# outcome records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwapOutcome:
    """One dual-homodyne attempt: outcomes, acceptance, conditional state.

    ``state`` is the normalized two-mode post-measurement state on the outer
    modes, present only for accepted attempts.
    """

    x0: float
    p0: float
    accepted: bool
    state: PhaseSpaceState | None = None


@dataclass(frozen=True)
class SwapLevelRecord:
    level: int
    outcome: SwapOutcome
    fidelity: float
    theta_p: float
    p_accept: float


# ---------------------------------------------------------------------------
# target-coefficient folding
# ---------------------------------------------------------------------------

def _coupling(m: int, x0: float) -> float:
    """K(x₀): weight of the sinθ_p component, from the overlap of displaced
    odd/even packets after the splitter.  Even in x₀; → 2 as the two basis
    peaks merge at large m."""
    gap = mu_peak(m) - mu_peak_alt(m)
    return 2.0 * math.cosh(math.sqrt(2.0) * x0 * gap) * math.exp(-0.5 * gap * gap)


def fold_coefficients(
    first: "SwapTargetCoeffs", second: "SwapTargetCoeffs", m: int, x0: float
) -> tuple[complex, complex, complex, complex]:
    """(𝔸, 𝔹, ℂ, 𝔻) for the swap of two family members at position outcome
    x₀; the produced member is (𝔸cosθ+𝔹sinθ, ℂcosθ+𝔻sinθ) before
    renormalization."""
    a1, c1 = first.a, first.c
    a2, c2 = second.a, second.c
    kk = 1j * _coupling(m, x0)
    aa = 2.0 * (a1 * a2 - np.conj(c1) * c2)
    bb = kk * (a1 * c2 - np.conj(c1) * a2)
    cc = 2.0 * (c1 * a2 + np.conj(a1) * c2)
    dd = kk * (np.conj(a1) * a2 + c1 * c2)
    return complex(aa), complex(bb), complex(cc), complex(dd)


@dataclass(frozen=True)
class SwapTargetCoeffs:
    """Family coefficients (A, C) on the shell |A|² + |C|² = 1/2, with the
    (x₀, θ_p) outcomes they were folded from.

    The chain is mirror-symmetric: both inputs of every swap carry the same
    coefficients, so one history determines the target at every level.
    """

    a: complex
    c: complex
    history: tuple[tuple[float, float], ...] = ()

    @classmethod
    def initial(cls) -> "SwapTargetCoeffs":
        """The post-connection member (|01⟩ + |10⟩)/√2: A = 0, C = 1/√2."""
        return cls(0.0 + 0.0j, complex(1.0 / math.sqrt(2.0)))

    @classmethod
    def from_history(
        cls, m: int, history: Sequence[tuple[float, float]]
    ) -> "SwapTargetCoeffs":
        coeffs = cls.initial()
        for x0, theta_p in history:
            coeffs = coeffs.advance(m, float(x0), float(theta_p))
        return coeffs

    def folded(self, m: int, x0: float) -> tuple[complex, complex, complex, complex]:
        return fold_coefficients(self, self, m, x0)

    def advance(self, m: int, x0: float, theta_p: float) -> "SwapTargetCoeffs":
        aa, bb, cc, dd = self.folded(m, x0)
        ct, st = math.cos(theta_p), math.sin(theta_p)
        a = aa * ct + bb * st
        c = cc * ct + dd * st
        total = abs(a) ** 2 + abs(c) ** 2
        if total <= 0.0:
            raise ValueError("target coefficients vanish at this θ_p")
        scale = math.sqrt(0.5 / total)
        return SwapTargetCoeffs(a * scale, c * scale, self.history + ((x0, theta_p),))


# ---------------------------------------------------------------------------
# fused splitter + dual-homodyne contraction
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _x_port_kernel(d1: int, d2: int) -> np.ndarray:
    """K[i, j, n]: coefficient of t^n after substituting t into output port 1
    and integrating port 2 (the X̂-measured side keeps its position)."""
    r3 = pair_rotation(d1, d2, _BALANCED)
    iinf = interval_moments(d1 + d2, math.inf)
    out = np.zeros_like(r3)
    for a in range(d1 + 1):
        for b in range(d2 + 1):
            ks = np.arange(a + b + 1)
            out[a, b, : a + b + 1] = r3[a, b, : a + b + 1] * iinf[a + b - ks]
    return out


@lru_cache(maxsize=64)
def _p_port_kernel(d1: int, d2: int) -> np.ndarray:
    """K[i, j, n]: port 1 integrated, outcome substituted into port 2 (the
    P̂-measured side keeps its momentum)."""
    r3 = pair_rotation(d1, d2, _BALANCED)
    iinf = interval_moments(d1 + d2, math.inf)
    out = np.zeros_like(r3)
    for a in range(d1 + 1):
        for b in range(d2 + 1):
            ks = np.arange(a + b + 1)
            out[a, b, a + b - ks] = r3[a, b, : a + b + 1] * iinf[ks]
    return out


def _kernel_at(kernel: np.ndarray, t: float) -> np.ndarray:
    return kernel @ (t ** np.arange(kernel.shape[2]))


def _require_two_modes(state: PhaseSpaceState, name: str) -> None:
    if state.mode_count != 2:
        raise ValueError(f"{name} must be a two-mode state, got {state.mode_count} modes")


class _FusedSwap:
    """Kernels for swapping a fixed input pair (left mode 1 meets right mode
    0 on the splitter); reused across rejection-sampling attempts."""

    def __init__(self, left: PhaseSpaceState, right: PhaseSpaceState):
        _require_two_modes(left, "left")
        _require_two_modes(right, "right")
        self.wl = left.coeffs
        self.wr = right.coeffs
        iinf = lambda d: interval_moments(d, math.inf)  # noqa: E731
        self.kx = _x_port_kernel(self.wl.shape[2] - 1, self.wr.shape[0] - 1)
        self.kp = _p_port_kernel(self.wl.shape[3] - 1, self.wr.shape[1] - 1)
        # memory modes integrated out once; p-sector of the measured pair is
        # rotation invariant, so its full integral needs no kernel at all
        self.ml = np.einsum(
            "abik,a,b->ik", self.wl, iinf(self.wl.shape[0] - 1), iinf(self.wl.shape[1] - 1)
        )
        self.mr = np.einsum(
            "jlcd,c,d->jl", self.wr, iinf(self.wr.shape[2] - 1), iinf(self.wr.shape[3] - 1)
        )
        mlx = self.ml @ iinf(self.ml.shape[1] - 1)
        mrx = self.mr @ iinf(self.mr.shape[1] - 1)
        cx = np.einsum("i,j,ijn->n", mlx, mrx, self.kx)
        self.x_density = PolyGaussDensity.from_unnormalized(cx)

    def p_density(self, x0: float) -> PolyGaussDensity:
        vx = _kernel_at(self.kx, x0)
        cp = np.einsum("ik,jl,ij,kln->n", self.ml, self.mr, vx, self.kp, optimize=True)
        return PolyGaussDensity.from_unnormalized(cp)

    def conditional_state(self, x0: float, p0: float) -> PhaseSpaceState:
        vx = _kernel_at(self.kx, x0)
        vp = _kernel_at(self.kp, p0)
        raw = np.einsum("abik,ij,kl,jlcd->abcd", self.wl, vx, vp, self.wr, optimize=True)
        return PhaseSpaceState(_trim(_flush(raw))).normalized()

    def attempt(self, rng: np.random.Generator) -> tuple[float, float]:
        x0 = self.x_density.sample(rng)
        p0 = self.p_density(x0).sample(rng)
        return x0, p0


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _check_delta(delta: float) -> None:
    if not delta > 0:
        raise ValueError("acceptance half-width must be positive")


def swap_once(
    left: PhaseSpaceState, right: PhaseSpaceState, delta: float, rng: np.random.Generator
) -> SwapOutcome:
    """One dual-homodyne swap attempt with sampled outcomes.

    Accepts when |x₀| ≤ delta; the conditional state is only computed for
    accepted attempts.
    """
    _check_delta(delta)
    fused = _FusedSwap(left, right)
    x0, p0 = fused.attempt(rng)
    accepted = abs(x0) <= delta
    state = fused.conditional_state(x0, p0) if accepted else None
    return SwapOutcome(x0, p0, accepted, state)


def swap_at(
    left: PhaseSpaceState, right: PhaseSpaceState, x0: float, p0: float
) -> PhaseSpaceState:
    """Exact conditional state at prescribed outcomes (for outcome sweeps)."""
    return _FusedSwap(left, right).conditional_state(x0, p0)


def success_probability(left: PhaseSpaceState, right: PhaseSpaceState, delta: float) -> float:
    """P(|x₀| ≤ delta) from the exact post-splitter position marginal."""
    _check_delta(delta)
    return _FusedSwap(left, right).x_density.interval_probability(delta)


# ---------------------------------------------------------------------------
# fidelity against the one-ebit family
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _family_dyads(m: int) -> dict[tuple[int, int], np.ndarray]:
    """Two-mode cross-Wigner tensors of |μ⟩⟨ν| over the family basis
    (|00⟩, |11⟩, |10⟩, |01⟩), upper triangle only (the rest by Hermiticity)."""
    odd, even = grown_basis(m)
    kets = ((odd, odd), (even, even), (even, odd), (odd, even))
    dyads: dict[tuple[int, int], np.ndarray] = {}
    for u in range(4):
        for v in range(u, 4):
            w1 = cross_wigner_matrix(kets[u][0], kets[v][0])
            w2 = cross_wigner_matrix(kets[u][1], kets[v][1])
            dyads[(u, v)] = np.multiply.outer(w1, w2).astype(complex)
    return dyads


def _family_matrix(state: PhaseSpaceState, m: int) -> np.ndarray:
    """S[ν, μ] = ⟨ν|ρ|μ⟩ over the family basis; Hermitian 4×4."""
    dyads = _family_dyads(m)
    s = np.zeros((4, 4), dtype=complex)
    for (u, v), tensor_uv in dyads.items():
        val = complex_overlap(state, tensor_uv)
        s[v, u] = val
        s[u, v] = np.conj(val)
    return 0.5 * (s + s.conj().T)


def _family_value(s: np.ndarray, a: complex, c: complex) -> float:
    vec = np.array([a, -np.conj(a), c, np.conj(c)])
    norm_sq = float(np.vdot(vec, vec).real)
    if norm_sq <= 0.0:
        return 0.0
    return float(np.vdot(vec, s @ vec).real) / norm_sq


def target_fidelity(
    state: PhaseSpaceState,
    m: int,
    history: Sequence = (),
    grid_points: int = _THETA_GRID,
) -> tuple[float, float]:
    """Best fidelity against the one-ebit family, and the θ_p attaining it.

    ``history`` holds (x₀, θ_p) pairs for completed swap levels, optionally
    followed by a bare x₀ for the level being scored; that final level's θ_p
    is the optimization variable.  With no pending x₀ the target is fixed by
    the folded coefficients alone (for an empty history, the post-connection
    member itself) and θ_p* is reported as 0.
    """
    _require_two_modes(state, "state")
    levels = list(history)
    pending: float | None = None
    if levels and np.isscalar(levels[-1]):
        pending = float(levels.pop())
    coeffs = SwapTargetCoeffs.from_history(m, levels)
    s = _family_matrix(state, m)
    if pending is None:
        return _family_value(s, coeffs.a, coeffs.c), 0.0

    aa, bb, cc, dd = coeffs.folded(m, pending)

    def value(theta: float) -> float:
        ct, st = math.cos(theta), math.sin(theta)
        return _family_value(s, aa * ct + bb * st, cc * ct + dd * st)

    thetas = np.linspace(0.0, 2.0 * math.pi, grid_points, endpoint=False)
    ct, st = np.cos(thetas), np.sin(thetas)
    vecs = np.empty((4, grid_points), dtype=complex)
    vecs[0] = aa * ct + bb * st
    vecs[1] = -np.conj(vecs[0])
    vecs[2] = cc * ct + dd * st
    vecs[3] = np.conj(vecs[2])
    norms = np.sum(np.abs(vecs) ** 2, axis=0)
    grid_vals = np.einsum("ig,ij,jg->g", vecs.conj(), s, vecs).real / norms
    best = int(np.argmax(grid_vals))
    step = 2.0 * math.pi / grid_points
    bracket = (thetas[best] - step, thetas[best], thetas[best] + step)
    try:
        res = minimize_scalar(
            lambda t: -value(t), bracket=bracket, method="golden", options={"xtol": 1e-6}
        )
        if -res.fun >= grid_vals[best]:
            return float(-res.fun), float(res.x % (2.0 * math.pi))
    except ValueError:
        pass  # flat bracket (ties); the grid point already is the maximum
    return float(grid_vals[best]), float(thetas[best])


# ---------------------------------------------------------------------------
# Monte-Carlo protocol sampling
# ---------------------------------------------------------------------------

def _accepted_attempt(
    fused: _FusedSwap, delta: float, rng: np.random.Generator
) -> tuple[float, float, float]:
    p_acc = fused.x_density.interval_probability(delta)
    if p_acc < MIN_ACCEPTANCE:
        raise ValueError(
            f"acceptance probability {p_acc:.3e} below {MIN_ACCEPTANCE:.0e}; "
            "refusing unbounded resampling"
        )
    cap = 1000 + int(50.0 / p_acc)
    for _ in range(cap):
        x0 = fused.x_density.sample(rng)
        if abs(x0) <= delta:
            return x0, fused.p_density(x0).sample(rng), p_acc
    raise RuntimeError("rejection sampling exhausted its attempt budget")


def mc_average_fidelity(
    left: PhaseSpaceState,
    right: PhaseSpaceState,
    delta: float,
    m: int,
    history: Sequence = (),
    samples: int = 100,
    *,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Mean fidelity and its standard error over accepted swap outcomes.

    Resamples until ``samples`` acceptances; each accepted state is scored
    with its own x₀ appended to ``history``.
    """
    _check_delta(delta)
    if samples < 2:
        raise ValueError("need at least two samples for a standard error")
    fused = _FusedSwap(left, right)
    base = tuple(tuple(entry) if not np.isscalar(entry) else entry for entry in history)
    fids = np.empty(samples)
    for k in range(samples):
        x0, p0, _ = _accepted_attempt(fused, delta, rng)
        state = fused.conditional_state(x0, p0)
        fids[k], _ = target_fidelity(state, m, base + (x0,))
    return float(fids.mean()), float(fids.std(ddof=1) / math.sqrt(samples))


def nested_swap(
    segment: PhaseSpaceState,
    levels: int,
    delta: float,
    m: int,
    rng: np.random.Generator,
) -> tuple[PhaseSpaceState, float, list[SwapLevelRecord]]:
    """One mirror-model chain through ``levels`` nested swaps.

    At every level both splitter inputs carry the level-below sample, so a
    single state per level represents the whole binary tree.  Returns the
    final state, its family fidelity, and the accepted per-level records.
    """
    _require_two_modes(segment, "segment")
    if not 0 <= levels <= 4:
        raise ValueError("swap nesting outside 0..4 is beyond the protocol's bookkeeping")
    _check_delta(delta)
    state = segment
    history: tuple = ()
    fidelity, _ = target_fidelity(state, m, history)
    records: list[SwapLevelRecord] = []
    for level in range(1, levels + 1):
        fused = _FusedSwap(state, state)
        x0, p0, p_acc = _accepted_attempt(fused, delta, rng)
        state = fused.conditional_state(x0, p0)
        fidelity, theta = target_fidelity(state, m, history + (x0,))
        history = history + ((x0, theta),)
        records.append(
            SwapLevelRecord(level, SwapOutcome(x0, p0, True, state), fidelity, theta, p_acc)
        )
    return state, fidelity, records
