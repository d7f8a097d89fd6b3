"""Independent numerical oracles used to referee the closed-form algebra.

Two routes that share no code with the package internals:

* brute-force quadrature (``scipy.integrate.quad`` / tensor Gauss-Hermite)
  applied directly to evaluated Wigner functions;
* a truncated Fock-space simulator (dense matrices, ``scipy.linalg.expm``
  for beam splitters) for states, channels and overlaps.

Conventions: x = (a + a†)/√2, vacuum wavefunction π^{-1/4} e^{-x²/2},
single-mode Wigner kernel e^{-(x²+p²)}.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import quad
from scipy.linalg import expm


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def quad_moment_interval(n: int, t: float) -> float:
    """∫_{-t}^{t} x^n e^{-x²} dx by adaptive quadrature."""
    if math.isinf(t):
        val, _ = quad(lambda x: x**n * math.exp(-(x * x)), -np.inf, np.inf)
        return val
    val, _ = quad(lambda x: x**n * math.exp(-(x * x)), -t, t)
    return val


def quad_moment_full(n: int, a: float, b: complex) -> complex:
    """∫ x^n e^{-a x² + b x} dx by adaptive quadrature (complex b allowed)."""
    re, _ = quad(lambda x: (x**n * np.exp(-a * x * x + b * x)).real, -np.inf, np.inf)
    im, _ = quad(lambda x: (x**n * np.exp(-a * x * x + b * x)).imag, -np.inf, np.inf)
    return re + 1j * im


def gh_nodes(order: int, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights such that sum(w · f(x)) = ∫ f(x) e^{-scale·x²} dx exactly
    for polynomial f up to degree 2·order-1."""
    x, w = hermgauss(order)
    s = math.sqrt(scale)
    return x / s, w / s


def gh_integral_2d(func, order: int = 40, scale: float = 1.0) -> float:
    """∫∫ f(x, p) e^{-scale(x²+p²)} dx dp via tensor Gauss-Hermite."""
    x, w = gh_nodes(order, scale)
    X, P = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return float(np.sum(W * func(X, P)))


def gh_integral_nd(func, dims: int, order: int = 24, scale: float = 1.0) -> float:
    """Tensor Gauss-Hermite in `dims` variables against e^{-scale·Σu²}."""
    x, w = gh_nodes(order, scale)
    grids = np.meshgrid(*([x] * dims), indexing="ij")
    weight = np.ones([order] * dims)
    for axis in range(dims):
        shape = [1] * dims
        shape[axis] = order
        weight = weight * w.reshape(shape)
    return float(np.sum(weight * func(*grids)))


# ---------------------------------------------------------------------------
# Fock-space simulator
# ---------------------------------------------------------------------------

def destroy(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1)


def fock_dm(n: int, dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return rho


def tensor_dm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def beam_splitter_unitary(theta: float, dim: int) -> np.ndarray:
    """exp(θ(a†b - a b†)) on a two-mode truncated Fock space."""
    a = np.kron(destroy(dim), np.eye(dim))
    b = np.kron(np.eye(dim), destroy(dim))
    gen = theta * (a.conj().T @ b - a @ b.conj().T)
    return expm(gen)


def loss_map(rho: np.ndarray, eta: float) -> np.ndarray:
    """Single-mode photon loss via Kraus operators K_k = √(C(n,k)) η^{(n-k)/2}(1-η)^{k/2} a^k / √(k!)."""
    dim = rho.shape[0]
    a = destroy(dim)
    n_op = np.diag(np.arange(dim)).astype(float)
    out = np.zeros_like(rho)
    eta_half_n = np.diag(np.sqrt(eta) ** np.arange(dim)).astype(complex)
    a_pow = np.eye(dim, dtype=complex)
    for k in range(dim):
        if k > 0:
            a_pow = a_pow @ a
        coeff = (1 - eta) ** (k / 2.0) / math.sqrt(math.factorial(k))
        kraus = coeff * (eta_half_n @ a_pow)
        out += kraus @ rho @ kraus.conj().T
    del n_op
    return out


def hermite_phys(n: int, x: np.ndarray) -> np.ndarray:
    """Physicists' Hermite polynomial H_n(x) by recursion."""
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev
    h = 2 * x
    for k in range(1, n):
        h, h_prev = 2 * x * h - 2 * k * h_prev, h
    return h


def fock_wavefunction(n: int, x: np.ndarray) -> np.ndarray:
    """⟨x|n⟩ = (2^n n! √π)^{-1/2} H_n(x) e^{-x²/2}."""
    norm = 1.0 / math.sqrt((2.0**n) * math.factorial(n) * math.sqrt(math.pi))
    return norm * hermite_phys(n, x) * np.exp(-x * x / 2.0)


def wigner_point_from_dm(rho: np.ndarray, x: float, p: float, y_order: int = 80) -> float:
    """W(x,p) = (1/π)∫ ⟨x+y|ρ|x-y⟩ e^{-2ipy} dy evaluated by quadrature."""
    dim = rho.shape[0]
    yg, wg = hermgauss(y_order)
    # substitute y directly; wavefunctions supply their own Gaussian decay,
    # so undo the Hermite weight e^{-y²}.
    psi_plus = np.array([fock_wavefunction(n, x + yg) for n in range(dim)])
    psi_minus = np.array([fock_wavefunction(n, x - yg) for n in range(dim)])
    integrand = np.einsum("mn,my,ny->y", rho, psi_plus, np.conj(psi_minus))
    vals = integrand * np.exp(-2j * p * yg) * np.exp(yg * yg) * wg
    return float(np.real(np.sum(vals))) / math.pi


def cross_wigner_point_from_dm(rho: np.ndarray, x: float, p: float, y_order: int = 80) -> complex:
    """Complex-valued variant of :func:`wigner_point_from_dm` for operators
    that are not Hermitian (e.g. |m⟩⟨n| coherences)."""
    dim = rho.shape[0]
    yg, wg = hermgauss(y_order)
    psi_plus = np.array([fock_wavefunction(n, x + yg) for n in range(dim)])
    psi_minus = np.array([fock_wavefunction(n, x - yg) for n in range(dim)])
    integrand = np.einsum("mn,my,ny->y", rho, psi_plus, np.conj(psi_minus))
    vals = integrand * np.exp(-2j * p * yg) * np.exp(yg * yg) * wg
    return complex(np.sum(vals)) / math.pi


def dm_overlap(rho: np.ndarray, sigma: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ sigma)))
