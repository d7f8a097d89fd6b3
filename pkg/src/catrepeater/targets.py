"""Protocol target states.

Two representations cover everything the protocol scores against:

* native targets — pure states whose wavefunctions are polynomial ×
  e^{-x²/2} per mode (the grown-state basis, the two-mode one-ebit family).
  These compile exactly into :class:`~catrepeater.phasespace.PhaseSpaceState`
  coefficients through the transform
      W(x,p) = (1/π) ∫ ψ(x+y) ψ*(x-y) e^{-2ipy} dy.
* Gaussian-sum targets — cat states and squeezed cat states, whose Wigner
  functions are finite sums of (complex-centered) Gaussian atoms with widths
  different from the native kernel.  They are never evolved, only scored
  against, so overlaps reduce to closed-form J(n, a, b) contractions.

The grown-cat geometry: after m doublings the ideal wavefunctions are
x^{2^m}e^{-x²/2} (even, "one") and x^{2^m-1}e^{-x²/2} (odd, "zero"), whose
cat-peak positions are μ_m = √(2^m + 1/2) and μ̃_m = √(2^m − 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .gaussint import gauss_moments, gauss_moments_extended
from .phasespace import EXTENDED_DEGREE, PhaseSpaceState, _trim

__all__ = [
    "mu_peak",
    "mu_peak_alt",
    "grown_basis",
    "ideal_grown",
    "psi_m",
    "phi_family",
    "GaussianSumTarget",
    "single_mode_cat",
    "two_mode_cat",
    "squeezed_single_cat",
    "squeezed_two_mode_cat",
    "optimal_cat_amplitude",
]

TWO_PI = 2.0 * math.pi
SQRT_PI = math.sqrt(math.pi)


def mu_peak(m: int) -> float:
    """Cat-peak position of the even grown basis state, √(2^m + 1/2)."""
    return math.sqrt(2.0**m + 0.5)


def mu_peak_alt(m: int) -> float:
    """Cat-peak position of the odd grown basis state, √(2^m − 1/2)."""
    return math.sqrt(2.0**m - 0.5)


# ---------------------------------------------------------------------------
# native wavefunction → Wigner compiler
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _hermite_like_table(qmax: int) -> tuple[np.ndarray, ...]:
    """Polynomials h_q(p) with ∫ y^q e^{-y² - 2ipy} dy = √π e^{-p²} h_q(p):
    h_0 = 1, h_1 = -ip, h_q = -ip·h_{q-1} + ((q-1)/2)·h_{q-2}.

    Kept in 80-bit complex: the compiler sums ~C(k,α)·h_q products with heavy
    cancellation, which costs ~13 digits at degree 64 in plain float64.
    """
    table: list[np.ndarray] = [np.array([1.0 + 0j], dtype=np.clongdouble)]
    if qmax >= 1:
        table.append(np.array([0.0, -1j], dtype=np.clongdouble))
    for q in range(2, qmax + 1):
        nxt = np.zeros(q + 1, dtype=np.clongdouble)
        nxt[1:] += -1j * table[q - 1]
        nxt[: q - 1] += np.longdouble(q - 1) / 2.0 * table[q - 2]
        table.append(nxt)
    return tuple(table)


def cross_wigner_matrix(ca: np.ndarray, cb: np.ndarray) -> np.ndarray:
    """Coefficient matrix (x-power, p-power) over the kernel e^{-(x²+p²)} of
    the cross-Wigner function of |ψ_a⟩⟨ψ_b| with ψ(x) = Σ_k c_k x^k e^{-x²/2}.

    Hermitian combinations Σ λ_a λ_b* … produce real Wigner coefficients.
    Assembled and returned in 80-bit complex; callers downcast after summing.
    """
    ca = np.asarray(ca, dtype=np.clongdouble)
    cb = np.asarray(cb, dtype=np.clongdouble)
    deg = (len(ca) - 1) + (len(cb) - 1)
    h = _hermite_like_table(deg)
    out = np.zeros((deg + 1, deg + 1), dtype=np.clongdouble)
    for k in np.nonzero(ca)[0]:
        for l in np.nonzero(cb)[0]:
            amp = ca[k] * np.conj(cb[l]) / np.longdouble(SQRT_PI)
            for alpha in range(k + 1):
                bin_k = math.comb(k, alpha)
                for beta in range(l + 1):
                    q = k + l - alpha - beta
                    coeff = amp * bin_k * math.comb(l, beta) * (-1.0) ** (l - beta)
                    out[alpha + beta, : q + 1] += coeff * h[q]
    return out


def compile_pure_state(terms: list[tuple[complex, list[np.ndarray]]]) -> PhaseSpaceState:
    """PhaseSpaceState of |ψ⟩⟨ψ| for ψ = Σ_t λ_t ⊗_modes (poly_t,mode × e^{-x²/2}).

    ``terms``: list of (amplitude, per-mode wavefunction coefficient vectors).
    The input is assumed normalized; the result is renormalized to integral 1
    to absorb roundoff.
    """
    modes = len(terms[0][1])
    top = [2 * max(len(vecs[mode]) - 1 for _, vecs in terms) for mode in range(modes)]
    shape = tuple(top[axis // 2] + 1 for axis in range(2 * modes))
    acc = np.zeros(shape, dtype=np.clongdouble)
    for amp_t, vecs_t in terms:
        for amp_s, vecs_s in terms:
            w = np.array(amp_t * np.conj(amp_s), dtype=np.clongdouble)
            block = w
            for mode in range(modes):
                block = np.multiply.outer(block, cross_wigner_matrix(vecs_t[mode], vecs_s[mode]))
            acc[tuple(slice(0, s) for s in block.shape)] += block
    if float(np.abs(acc.imag).max()) > 1e-10 * max(float(np.abs(acc.real).max()), 1e-300):
        raise ValueError("non-Hermitian term combination produced a complex Wigner function")
    state = PhaseSpaceState(_trim(np.ascontiguousarray(acc.real.astype(float))))
    return state.normalized()


def complex_overlap(state: PhaseSpaceState, other_coeffs: np.ndarray) -> complex:
    """(2π)^k ∫ W_state · W_other for a complex coefficient tensor sharing the
    native kernel — the cross-Wigner matrix element ⟨b|ρ|a⟩ when
    ``other_coeffs`` compiles |a⟩⟨b|."""
    a = state.coeffs
    nmax = max(max(s for s in a.shape), max(s for s in other_coeffs.shape)) - 1
    if nmax > 40:
        a = a.astype(np.longdouble)
        t = other_coeffs.astype(np.clongdouble)
        m2 = gauss_moments_extended(2 * nmax, 2.0, 0.0)
    else:
        t = np.asarray(other_coeffs, dtype=complex)
        m2 = gauss_moments(2 * nmax, 2.0, 0.0)
    for axis in range(a.ndim):
        q = m2[np.add.outer(np.arange(t.shape[0]), np.arange(a.shape[axis]))]
        t = np.tensordot(t, q.astype(t.dtype), axes=([0], [0]))
    return complex(TWO_PI ** state.mode_count * np.sum(a * t))


# ---------------------------------------------------------------------------
# native protocol targets
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def grown_basis(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized wavefunction coefficient vectors (odd, even) of the grown
    basis: x^{2^m-1}e^{-x²/2} / √Γ(2^m-1/2) and x^{2^m}e^{-x²/2} / √Γ(2^m+1/2)."""
    if m < 1:
        raise ValueError("growth level must be ≥ 1")
    top = 2**m
    odd = np.zeros(top)
    odd[top - 1] = math.exp(-0.5 * gammaln(top - 0.5))
    even = np.zeros(top + 1)
    even[top] = math.exp(-0.5 * gammaln(top + 0.5))
    return odd, even


def ideal_grown(m: int) -> PhaseSpaceState:
    """Pure state the growth chain converges to for Δ → 0: ψ ∝ x^{2^m} e^{-x²/2}."""
    _, even = grown_basis(m)
    return compile_pure_state([(1.0, [even])])


def psi_m(m: int) -> PhaseSpaceState:
    """The ideal post-connection two-mode state (|odd,even⟩+|even,odd⟩)/√2."""
    odd, even = grown_basis(m)
    inv = 1.0 / math.sqrt(2.0)
    return compile_pure_state([(inv, [odd, even]), (inv, [even, odd])])


def phi_family(a_coeff: complex, c_coeff: complex, m: int) -> PhaseSpaceState:
    """One-ebit target family A|00⟩ + C*|01⟩ + C|10⟩ − A*|11⟩ in the grown
    basis (|0⟩ = odd, |1⟩ = even member), with |A|² + |C|² = 1/2.

    Maximally entangled for every (A, C) on the constraint sphere."""
    norm_sq = abs(a_coeff) ** 2 + abs(c_coeff) ** 2
    if abs(norm_sq - 0.5) > 1e-9:
        raise ValueError("family constraint |A|² + |C|² = 1/2 violated")
    odd, even = grown_basis(m)
    return compile_pure_state(
        [
            (a_coeff, [odd, odd]),
            (np.conj(c_coeff), [odd, even]),
            (c_coeff, [even, odd]),
            (-np.conj(a_coeff), [even, even]),
        ]
    )


# ---------------------------------------------------------------------------
# Gaussian-sum (cat) targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianSumTarget:
    """Pure-state Wigner function held as a finite sum of Gaussian atoms
    Π_modes e^{-a_x(x-c_x)² - a_p(p-c_p)²} with complex centers.

    ``prefactors``: complex array (n_atoms,);
    ``params``: complex array (n_atoms, modes, 4) holding (a_x, c_x, a_p, c_p).
    """

    prefactors: np.ndarray
    params: np.ndarray

    @property
    def mode_count(self) -> int:
        return self.params.shape[1]

    def wigner_value(self, *coords) -> np.ndarray:
        """Evaluate the target Wigner function at (x₀, p₀, x₁, …) arrays."""
        coords = [np.asarray(c, dtype=float) for c in coords]
        total = np.zeros(np.broadcast(*coords).shape, dtype=complex)
        for pref, modes in zip(self.prefactors, self.params):
            term = np.full_like(total, pref)
            for mode, (a_x, c_x, a_p, c_p) in enumerate(modes):
                x, p = coords[2 * mode], coords[2 * mode + 1]
                term = term * np.exp(-a_x * (x - c_x) ** 2 - a_p * (p - c_p) ** 2)
            total += term
        assert np.abs(total.imag).max() < 1e-10
        return total.real

    def overlap_with(self, state: PhaseSpaceState) -> float:
        """(2π)^k ∫ W_state · W_target = ⟨target|ρ|target⟩."""
        if state.mode_count != self.mode_count:
            raise ValueError("mode-count mismatch in overlap")
        extended = state.max_degree > EXTENDED_DEGREE
        moments = gauss_moments_extended if extended else gauss_moments
        ctype = np.clongdouble if extended else complex
        total = ctype(0.0)
        for pref, modes in zip(self.prefactors, self.params):
            t = state.coeffs.astype(ctype)
            for mode in range(self.mode_count):
                for a, c in ((modes[mode, 0], modes[mode, 1]), (modes[mode, 2], modes[mode, 3])):
                    # axes shift down as leading ones are consumed
                    nmax = t.shape[0] - 1
                    vec = np.exp(-ctype(a) * ctype(c) ** 2) * moments(
                        nmax, float(a.real + 1.0), 2.0 * a * c
                    ).astype(ctype)
                    t = np.tensordot(t, vec, axes=([0], [0]))
            total += ctype(pref) * ctype(t)
        value = complex(TWO_PI ** self.mode_count * total)
        assert abs(value.imag) < 1e-9
        return float(value.real)

    def self_overlap(self) -> float:
        """∫ (2π)^k W_target² from atom-atom Gaussian products (purity check)."""
        total = 0.0 + 0.0j
        for pref1, modes1 in zip(self.prefactors, self.params):
            for pref2, modes2 in zip(self.prefactors, self.params):
                term = pref1 * pref2
                for mode in range(self.mode_count):
                    for off in (0, 2):
                        a1, c1 = modes1[mode, off], modes1[mode, off + 1]
                        a2, c2 = modes2[mode, off], modes2[mode, off + 1]
                        b = 2.0 * (a1 * c1 + a2 * c2)
                        term = term * np.exp(-a1 * c1 * c1 - a2 * c2 * c2) * gauss_moments(
                            0, float((a1 + a2).real), b
                        )[0]
                total += term
        value = TWO_PI ** self.mode_count * total
        assert abs(value.imag) < 1e-9
        return float(value.real)


def _gaussian_packet_target(
    branch_amps: list[complex], branch_centers: list[tuple[float, ...]], width: float
) -> GaussianSumTarget:
    """Target for ψ = N Σ_k λ_k Π_modes e^{-w(x - c_{k,mode})²}.

    The cross-Wigner of two real-centered packets e^{-w(x-c₁)²}, e^{-w(x-c₂)²}
    is (1/π)√(π/2w) e^{-wΔ²/2} · e^{-2w(x-(c₁+c₂)/2)² - (1/2w)(p - iwΔ)²},
    Δ = c₁ - c₂, giving one atom per branch pair and mode.
    """
    w = width
    modes = len(branch_centers[0])
    # wavefunction normalization from pairwise packet overlaps
    norm_sq = 0.0 + 0.0j
    for amp1, cen1 in zip(branch_amps, branch_centers):
        for amp2, cen2 in zip(branch_amps, branch_centers):
            term = amp1 * np.conj(amp2)
            for c1, c2 in zip(cen1, cen2):
                term *= math.sqrt(math.pi / (2 * w)) * math.exp(-w * (c1 - c2) ** 2 / 2.0)
            norm_sq += term
    prefactors = []
    params = []
    for amp1, cen1 in zip(branch_amps, branch_centers):
        for amp2, cen2 in zip(branch_amps, branch_centers):
            pref = amp1 * np.conj(amp2) / norm_sq.real
            mode_params = np.zeros((modes, 4), dtype=complex)
            for mode, (c1, c2) in enumerate(zip(cen1, cen2)):
                delta = c1 - c2
                pref *= (1.0 / math.pi) * math.sqrt(math.pi / (2 * w)) * math.exp(-w * delta**2 / 2.0)
                mode_params[mode] = (2.0 * w, (c1 + c2) / 2.0, 1.0 / (2.0 * w), 1j * w * delta)
            prefactors.append(pref)
            params.append(mode_params)
    return GaussianSumTarget(np.array(prefactors), np.array(params))


def single_mode_cat(theta: float, alpha: float) -> GaussianSumTarget:
    """Coherent-state cat N(e^{iθ}|α⟩ + e^{-iθ}|-α⟩), wavefunction packets of
    width 1/2 centered at ±√2·α."""
    c = math.sqrt(2.0) * alpha
    return _gaussian_packet_target(
        [np.exp(1j * theta), np.exp(-1j * theta)], [(c,), (-c,)], width=0.5
    )


def two_mode_cat(theta: float, alpha: float) -> GaussianSumTarget:
    """Unsqueezed two-mode cat N(e^{iθ}|α,α⟩ + e^{-iθ}|-α,-α⟩)."""
    c = math.sqrt(2.0) * alpha
    return _gaussian_packet_target(
        [np.exp(1j * theta), np.exp(-1j * theta)], [(c, c), (-c, -c)], width=0.5
    )


def squeezed_single_cat(m: int) -> GaussianSumTarget:
    """The growth target: cat of two x-squeezed packets at ±μ_m,
    ψ ∝ e^{-(x-μ_m)²} + e^{-(x+μ_m)²}."""
    c = mu_peak(m)
    return _gaussian_packet_target([1.0, 1.0], [(c,), (-c,)], width=1.0)


def squeezed_two_mode_cat(m: int, amplitude: float | None = None) -> GaussianSumTarget:
    """Odd two-mode squeezed cat ∝ e^{-(x-α)²-(y-α)²} − e^{-(x+α)²-(y+α)²}.

    ``amplitude`` is the coherent amplitude α (packet centers after the
    squeeze).  Default: the per-m amplitude maximizing the overlap with the
    ideal post-connection state, see :func:`optimal_cat_amplitude`.
    """
    alpha = optimal_cat_amplitude(m) if amplitude is None else amplitude
    return _gaussian_packet_target([1.0, -1.0], [(alpha, alpha), (-alpha, -alpha)], width=1.0)


@lru_cache(maxsize=16)
def optimal_cat_amplitude(m: int) -> float:
    """Amplitude α* maximizing overlap(psi_m(m), odd two-mode cat(α))."""
    reference = psi_m(m)
    guess = 2.0 ** (m / 2.0)

    def negative_overlap(alpha: float) -> float:
        return -squeezed_two_mode_cat(m, amplitude=alpha).overlap_with(reference)

    res = minimize_scalar(negative_overlap, bounds=(0.5 * guess, 1.5 * guess), method="bounded")
    return float(res.x)
