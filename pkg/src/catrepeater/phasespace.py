"""Exact algebra for multimode Wigner functions of the form

    W(x₀,p₀,…) = P(x₀,p₀,…) · exp(-Σᵢ(xᵢ² + pᵢ²)),

with P a real polynomial held as a dense coefficient tensor (one x-power
axis and one p-power axis per mode).  Every physical operation of the
protocol — beam splitters, loss, interval/point homodyne conditioning,
overlaps — maps this family to itself exactly, so no truncation or grid
error enters anywhere.

All states are immutable; operations return new values.  Sampling takes an
explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri

from .gaussint import (
    asym_interval_moments,
    gauss_moments,
    gauss_moments_extended,
    interval_moments,
)

__all__ = [
    "PhaseSpaceState",
    "PolyGaussDensity",
    "vacuum",
    "single_photon",
    "fock",
    "tensor",
    "sample_outcome",
]

# roundoff debris is flushed after each transform to stop degree inflation;
# the comparison weights each coefficient by the L2 norm of its monomial
# (√∫x^{2k}e^{-2x²}), because legitimate high-degree coefficients are
# naturally many orders of magnitude below low-degree ones
FLUSH_TOL = 1e-14

TWO_PI = 2.0 * math.pi
SQRT_PI = math.sqrt(math.pi)


@lru_cache(maxsize=64)
def _monomial_scale(n: int) -> np.ndarray:
    return np.sqrt(gauss_moments(2 * n, 2.0, 0.0)[::2])


def _flush(coeffs: np.ndarray) -> np.ndarray:
    score = np.abs(coeffs)
    for axis in range(coeffs.ndim):
        shape = [1] * coeffs.ndim
        shape[axis] = coeffs.shape[axis]
        score = score * _monomial_scale(coeffs.shape[axis] - 1).reshape(shape)
    top = score.max(initial=0.0)
    if top == 0.0:
        return coeffs
    return np.where(score < FLUSH_TOL * top, 0.0, coeffs)


def _trim(coeffs: np.ndarray) -> np.ndarray:
    """Drop trailing all-zero slices along every axis."""
    for axis in range(coeffs.ndim):
        other = tuple(i for i in range(coeffs.ndim) if i != axis)
        mask = np.any(coeffs != 0.0, axis=other)
        last = int(np.max(np.nonzero(mask)[0])) if mask.any() else 0
        if last + 1 < coeffs.shape[axis]:
            sl = [slice(None)] * coeffs.ndim
            sl[axis] = slice(0, last + 1)
            coeffs = coeffs[tuple(sl)]
    return coeffs


@lru_cache(maxsize=256)
def _binom_row(n: int) -> np.ndarray:
    return np.array([math.comb(n, k) for k in range(n + 1)], dtype=float)


@lru_cache(maxsize=128)
def pair_rotation(d1: int, d2: int, theta: float) -> np.ndarray:
    """Monomial transfer tensor for the in-plane rotation
    (u, v) → (c·out1 − s·out2, s·out1 + c·out2), c = cosθ, s = sinθ.

    R[a, b, k] is the coefficient of out1^k · out2^{a+b-k} in the expansion
    of u^a v^b; shape (d1+1, d2+1, d1+d2+1).
    """
    c, s = math.cos(theta), math.sin(theta)
    out = np.zeros((d1 + 1, d2 + 1, d1 + d2 + 1))
    for a in range(d1 + 1):
        ua = _binom_row(a) * (c ** np.arange(a + 1)) * ((-s) ** (a - np.arange(a + 1)))
        for b in range(d2 + 1):
            vb = _binom_row(b) * (s ** np.arange(b + 1)) * (c ** (b - np.arange(b + 1)))
            out[a, b, : a + b + 1] = np.convolve(ua, vb)
    return out


def _rotation_matrix4(d1: int, d2: int, theta: float) -> np.ndarray:
    """Dense R4[a, b, k, l] with l = a+b-k made explicit (for the generic
    beam splitter; the hot paths use :func:`pair_rotation` directly)."""
    r3 = pair_rotation(d1, d2, theta)
    dmax = d1 + d2
    r4 = np.zeros((d1 + 1, d2 + 1, dmax + 1, dmax + 1))
    for a in range(d1 + 1):
        for b in range(d2 + 1):
            ks = np.arange(a + b + 1)
            r4[a, b, ks, a + b - ks] = r3[a, b, : a + b + 1]
    return r4


def _full_moments(nmax: int) -> np.ndarray:
    return interval_moments(nmax, np.inf)


# monomial contractions amplify roundoff by ~2^degree-ish factors once the
# polynomial degree passes ~50; scoring integrals switch to 80-bit arithmetic
# there (they are O(d²) work, so the slow non-BLAS path costs nothing)
EXTENDED_DEGREE = 40


def _contract_axis(arr: np.ndarray, axis: int, vec: np.ndarray) -> np.ndarray:
    return np.tensordot(arr, vec[: arr.shape[axis]], axes=([axis], [0]))


@dataclass(frozen=True, eq=False)
class PhaseSpaceState:
    """k-mode Wigner function: polynomial coefficients over the fixed
    Gaussian kernel e^{-Σ(x²+p²)}.

    ``coeffs`` has 2k axes ordered (x₀-power, p₀-power, x₁-power, …);
    ``weight`` records the total phase-space integral of the stored
    function (1 for normalized states), kept for conditional-probability
    bookkeeping.
    """

    coeffs: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        if self.coeffs.ndim % 2 != 0:
            raise ValueError("coefficient tensor needs one (x, p) axis pair per mode")
        if np.iscomplexobj(self.coeffs):
            raise ValueError("Wigner coefficients must be real")

    # -- structure ---------------------------------------------------------

    @property
    def mode_count(self) -> int:
        return self.coeffs.ndim // 2

    @property
    def max_degree(self) -> int:
        return max((s - 1 for s in self.coeffs.shape), default=0)

    def _x_axis(self, mode: int) -> int:
        return 2 * mode

    def _p_axis(self, mode: int) -> int:
        return 2 * mode + 1

    def _check_mode(self, mode: int) -> None:
        if not 0 <= mode < self.mode_count:
            raise ValueError(f"mode index {mode} out of range for {self.mode_count} modes")

    # -- integrals ---------------------------------------------------------

    def norm_integral(self) -> float:
        """Total integral ∫ W over all phase-space variables."""
        t = self.coeffs
        if self.max_degree > EXTENDED_DEGREE:
            t = t.astype(np.longdouble)
            moments = gauss_moments_extended(self.max_degree, 1.0, 0.0)
            for _ in range(t.ndim):
                t = np.tensordot(t, moments[: t.shape[0]], axes=([0], [0]))
            return float(t)
        for _ in range(t.ndim):
            t = _contract_axis(t, 0, _full_moments(t.shape[0] - 1))
        return float(t)

    def normalized(self) -> "PhaseSpaceState":
        z = self.norm_integral()
        if z <= 0:
            raise ValueError("cannot normalize a state with nonpositive integral")
        return PhaseSpaceState(self.coeffs / z, weight=1.0)

    def overlap(self, other) -> float:
        """(2π)^k ∫ W·W_other; for a pure ``other`` this is ⟨other|ρ|other⟩.

        ``other`` may be another state or any target exposing
        ``overlap_with``.
        """
        if hasattr(other, "overlap_with"):
            return other.overlap_with(self)
        if not isinstance(other, PhaseSpaceState):
            raise TypeError(f"cannot overlap with {type(other).__name__}")
        if other.mode_count != self.mode_count:
            raise ValueError("mode-count mismatch in overlap")
        a, b = self.coeffs, other.coeffs
        nmax = max(self.max_degree, other.max_degree)
        if nmax > EXTENDED_DEGREE:
            m2 = gauss_moments_extended(2 * nmax, 2.0, 0.0)
            a = a.astype(np.longdouble)
            b = b.astype(np.longdouble)
        else:
            m2 = gauss_moments(2 * nmax, 2.0, 0.0)
        t = b
        for axis in range(a.ndim):
            q = m2[np.add.outer(np.arange(t.shape[0]), np.arange(a.shape[axis]))]
            # pops the leading axis of t, appends the transformed one at the
            # end; after ndim passes the original order is restored
            t = np.tensordot(t, q, axes=([0], [0]))
        return float(TWO_PI ** self.mode_count * np.sum(a * t))

    def purity(self) -> float:
        """(2π)^k ∫ (W/‖W‖)² — equals 1 exactly for pure states."""
        z = self.norm_integral()
        return self.overlap(self) / (z * z)

    # -- Gaussian unitaries and channels ------------------------------------

    def beam_splitter(self, i: int, j: int, theta: float) -> "PhaseSpaceState":
        """Passive mode rotation by θ on modes (i, j):
        x_i → cosθ·x_i + sinθ·x_j, x_j → cosθ·x_j − sinθ·x_i (same for p)."""
        self._check_mode(i)
        self._check_mode(j)
        if i == j:
            raise ValueError("beam splitter needs two distinct modes")
        out = self.coeffs
        for ax1, ax2 in ((self._x_axis(i), self._x_axis(j)), (self._p_axis(i), self._p_axis(j))):
            r4 = _rotation_matrix4(out.shape[ax1] - 1, out.shape[ax2] - 1, theta)
            moved = np.moveaxis(out, (ax1, ax2), (0, 1))
            mixed = np.tensordot(r4, moved, axes=([0, 1], [0, 1]))
            out = np.moveaxis(mixed, (0, 1), (ax1, ax2))
        return PhaseSpaceState(_trim(_flush(out)), weight=self.weight)

    def loss_channel(self, i: int, eta: float) -> "PhaseSpaceState":
        """Mix mode i with a fresh vacuum at transmission η and trace out the
        ancilla.  Exact per-axis contraction; degree never grows."""
        self._check_mode(i)
        if not 0.0 <= eta <= 1.0:
            raise ValueError("transmission must lie in [0, 1]")
        d = max(self.coeffs.shape[self._x_axis(i)], self.coeffs.shape[self._p_axis(i)]) - 1
        iinf = _full_moments(d)
        lmat = np.zeros((d + 1, d + 1))
        for a in range(d + 1):
            alphas = np.arange(a + 1)
            lmat[a, : a + 1] = (
                _binom_row(a)
                * np.sqrt(eta) ** alphas
                * np.sqrt(1.0 - eta) ** (a - alphas)
                * iinf[: a + 1][::-1]
            ) / SQRT_PI
        out = self.coeffs
        for axis in (self._x_axis(i), self._p_axis(i)):
            moved = np.moveaxis(out, axis, 0)
            mixed = np.tensordot(lmat[: moved.shape[0], : moved.shape[0]], moved, axes=([0], [0]))
            out = np.moveaxis(mixed, 0, axis)
        return PhaseSpaceState(_trim(_flush(out)), weight=self.weight)

    # -- measurements --------------------------------------------------------

    def measure_x_interval(self, i: int, delta: float) -> tuple[float, "PhaseSpaceState"]:
        """Homodyne x-measurement on mode i accepted for |x| ≤ delta.

        Returns (acceptance probability, normalized average post-measurement
        state with mode i removed).  delta may be +inf (plain partial trace).
        """
        self._check_mode(i)
        if not delta > 0:
            raise ValueError("acceptance half-width must be positive")
        xa, pa = self._x_axis(i), self._p_axis(i)
        t = _contract_axis(self.coeffs, pa, _full_moments(self.coeffs.shape[pa] - 1))
        t = _contract_axis(t, xa, interval_moments(self.coeffs.shape[xa] - 1, delta))
        return self._conditional(t)

    def trace_mode(self, i: int) -> "PhaseSpaceState":
        _, out = self.measure_x_interval(i, np.inf)
        return out

    def condition_quadrature(
        self, i: int, which: str, value: float
    ) -> tuple[float, "PhaseSpaceState"]:
        """Condition mode i on a sharp quadrature outcome.

        ``which``: "position" substitutes x_i = value and integrates p_i;
        "momentum" the reverse.  Returns (marginal probability density at the
        outcome, normalized conditional state with mode i removed).
        """
        self._check_mode(i)
        if which not in ("position", "momentum"):
            raise ValueError("which must be 'position' or 'momentum'")
        xa, pa = self._x_axis(i), self._p_axis(i)
        keep, drop = (xa, pa) if which == "position" else (pa, xa)
        t = _contract_axis(self.coeffs, drop, _full_moments(self.coeffs.shape[drop] - 1))
        keep_after = keep if drop > keep else keep - 1
        powers = value ** np.arange(t.shape[keep_after]) * math.exp(-value * value)
        t = _contract_axis(t, keep_after, powers)
        return self._conditional(t, allow_zero=True)

    def _conditional(
        self, reduced: np.ndarray, allow_zero: bool = False
    ) -> tuple[float, "PhaseSpaceState | None"]:
        z_in = self.norm_integral()
        t = reduced
        for _ in range(t.ndim):
            t = _contract_axis(t, 0, _full_moments(t.shape[0] - 1))
        z_out = float(t)
        prob = z_out / z_in
        if z_out <= 1e-300 * z_in:
            if allow_zero:
                # measure-zero outcome (e.g. conditioning on a wavefunction
                # node): no post-measurement state exists
                return max(prob, 0.0), None
            raise ValueError("conditioning produced zero probability mass")
        if reduced.ndim == 0:
            return prob, PhaseSpaceState(np.ones(1).reshape(()), weight=1.0)
        return prob, PhaseSpaceState(_trim(_flush(reduced / z_out)), weight=1.0)

    # -- densities -----------------------------------------------------------

    def marginal_density(self, i: int, which: str = "position") -> "PolyGaussDensity":
        """Exact 1D outcome density of the chosen quadrature of mode i
        (all other variables integrated out)."""
        self._check_mode(i)
        if which not in ("position", "momentum"):
            raise ValueError("which must be 'position' or 'momentum'")
        keep = self._x_axis(i) if which == "position" else self._p_axis(i)
        t = self.coeffs
        for axis in sorted((ax for ax in range(t.ndim) if ax != keep), reverse=True):
            t = _contract_axis(t, axis, _full_moments(t.shape[axis] - 1))
        return PolyGaussDensity.from_unnormalized(t)

    # -- diagnostics ---------------------------------------------------------

    def evaluate(self, *coords) -> np.ndarray:
        """Evaluate W at phase-space points.  Supply one array per axis in
        (x₀, p₀, x₁, p₁, …) order; arrays broadcast together."""
        if len(coords) != self.coeffs.ndim:
            raise ValueError("need one coordinate array per tensor axis")
        coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
        flat = [c.reshape(-1) for c in coords]
        letters = "abcdefghijkl"[: self.coeffs.ndim]
        operands = [self.coeffs]
        spec_in = [letters]
        for ax, c in enumerate(flat):
            powers = c[None, :] ** np.arange(self.coeffs.shape[ax])[:, None]
            operands.append(powers)
            spec_in.append(letters[ax] + "z")
        poly = np.einsum(",".join(spec_in) + "->z", *operands)
        gauss = np.exp(-sum(c * c for c in flat))
        return (poly * gauss).reshape(coords[0].shape)

    def dump(self) -> str:
        """Locale-independent plain-text dump: one matrix block per mode
        pair, rows = x-power, columns = p-power."""
        lines = [f"# modes={self.mode_count} shape={'x'.join(map(str, self.coeffs.shape))} weight={self.weight!r}"]
        mat = self.coeffs.reshape(-1, self.coeffs.shape[-1]) if self.coeffs.ndim > 0 else self.coeffs.reshape(1, 1)
        if self.mode_count == 1:
            lines.append("# rows: x-power, columns: p-power")
        else:
            lines.append("# rows: flattened leading powers (C order), columns: last p-power")
        for row in mat:
            lines.append(" ".join(format(v, ".17g") for v in row))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def vacuum(modes: int = 1) -> PhaseSpaceState:
    """|0…0⟩: constant coefficient (1/π)^k."""
    coeffs = np.full([1] * (2 * modes), (1.0 / math.pi) ** modes)
    return PhaseSpaceState(coeffs)


def single_photon() -> PhaseSpaceState:
    """|1⟩: W = (1/π)(2x² + 2p² − 1)e^{-(x²+p²)}."""
    coeffs = np.zeros((3, 3))
    coeffs[0, 0] = -1.0 / math.pi
    coeffs[2, 0] = 2.0 / math.pi
    coeffs[0, 2] = 2.0 / math.pi
    return PhaseSpaceState(coeffs)


def fock(n: int) -> PhaseSpaceState:
    """Number state |n⟩ for n ≤ 2 (all the protocol's sources need)."""
    if n == 0:
        return vacuum()
    if n == 1:
        return single_photon()
    if n == 2:
        # (1/π)(1 − 4x² − 4p² + 2x⁴ + 4x²p² + 2p⁴) e^{-(x²+p²)}
        coeffs = np.zeros((5, 5))
        coeffs[0, 0] = 1.0
        coeffs[2, 0] = coeffs[0, 2] = -4.0
        coeffs[4, 0] = coeffs[0, 4] = 2.0
        coeffs[2, 2] = 4.0
        return PhaseSpaceState(coeffs / math.pi)
    raise ValueError("fock states above n=2 are outside the protocol's bookkeeping")


def tensor(a: PhaseSpaceState, b: PhaseSpaceState) -> PhaseSpaceState:
    """Product state; modes of ``b`` are appended after those of ``a``."""
    coeffs = np.multiply.outer(a.coeffs, b.coeffs)
    return PhaseSpaceState(coeffs, weight=a.weight * b.weight)


# ---------------------------------------------------------------------------
# outcome densities and sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PolyGaussDensity:
    """Normalized 1D density  ρ(x) = Σ c_n x^n e^{-x²}."""

    coeffs: np.ndarray

    @classmethod
    def from_unnormalized(cls, coeffs: np.ndarray) -> "PolyGaussDensity":
        z = float(np.dot(coeffs, _full_moments(len(coeffs) - 1)))
        if z <= 0:
            raise ValueError("density has nonpositive mass")
        return cls(np.asarray(coeffs, dtype=float) / z)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        poly = np.polynomial.polynomial.polyval(x, self.coeffs)
        return poly * np.exp(-x * x)

    def interval_probability(self, t: float) -> float:
        """∫_{-t}^{t} ρ(x) dx."""
        return float(np.dot(self.coeffs, interval_moments(len(self.coeffs) - 1, t)))

    def probability(self, lo: float, hi: float) -> float:
        """∫_{lo}^{hi} ρ(x) dx for a general interval."""
        return float(np.dot(self.coeffs, asym_interval_moments(len(self.coeffs) - 1, lo, hi)))

    def second_moment(self) -> float:
        shifted = np.zeros(len(self.coeffs) + 2)
        shifted[2:] = self.coeffs
        return float(np.dot(shifted, _full_moments(len(shifted) - 1)))

    def sample(self, rng: np.random.Generator, restrict: tuple[float, float] | None = None) -> float:
        """One rejection-sampled outcome (deterministic for a fixed rng
        state).  ``restrict`` renormalizes to an interval; zero-mass
        intervals are rejected."""
        var = 1.5 * self.second_moment()
        sigma = math.sqrt(var)
        lo, hi = (-np.inf, np.inf) if restrict is None else restrict
        if restrict is not None:
            if self.probability(lo, hi) <= 1e-12:
                raise ValueError("restriction interval has negligible probability mass")
            lo_u, hi_u = ndtr(lo / sigma), ndtr(hi / sigma)

        def envelope(x):
            return np.exp(-x * x / (2.0 * var)) / (sigma * math.sqrt(2 * math.pi))

        grid = np.linspace(max(lo, -8 * sigma), min(hi, 8 * sigma), 4001)
        bound = 1.25 * float(np.max(np.maximum(self(grid), 0.0) / envelope(grid)))
        for _ in range(1_000_000):
            if restrict is None:
                x = float(rng.normal(0.0, sigma))
            else:
                x = float(sigma * ndtri(lo_u + (hi_u - lo_u) * rng.uniform()))
            if rng.uniform() * bound * envelope(x) <= max(float(self(x)), 0.0):
                return x
        raise RuntimeError("rejection sampling failed to accept (pathological density)")


def sample_outcome(
    density: PolyGaussDensity,
    rng: np.random.Generator,
    restrict: tuple[float, float] | None = None,
) -> float:
    """Draw one measurement outcome from an exact marginal density."""
    return density.sample(rng, restrict=restrict)
