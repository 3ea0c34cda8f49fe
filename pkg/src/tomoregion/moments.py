"""Spherical-harmonic moments of qubit likelihood densities.

Phase convention
----------------
Pure qubit states are parametrized by sphere angles ``(theta, phi)`` through

    |x(theta, phi)> = i e^{i phi/2} sin(theta/2) |0> + e^{-i phi/2} cos(theta/2) |1>,

so ``theta = 0`` is ``|1>`` and ``theta = pi`` is ``|0>``.  Every angle accepted
or returned by this module is in this frame; it differs from the physical
Bloch frame used by :mod:`tomoregion.likelihood` by a fixed isometry, which
leaves all geodesic quantities unchanged.

The harmonic basis is ``y_lm = (-i)^m sqrt(4 pi) Y_l^m`` with ``Y_l^m`` the
Condon-Shortley spherical harmonic.  It is orthonormal for the normalized
area measure ``dx = sin(theta) dtheta dphi / (4 pi)`` and satisfies

    sum_m conj(y_lm(z)) y_lm(x) = (2l + 1) P_l(cos gamma),

with ``gamma`` the angle between ``x`` and ``z``.  A real function has
``c_{l,-m} = (-1)^m conj(c_{lm})``.

Moments are ``c_lm = int f(x) conj(y_lm(x)) dx``.  Densities that are
rotationally symmetric about an axis ``z`` have ``c_lm = r_l conj(y_lm(z))``;
``r_l`` is the "reduced" coefficient returned by :func:`covariant_coefficient`,
:func:`balanced_basis_coefficient` and :func:`single_basis_coefficient`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import sph_harm_y

from .hilbert import PureState
from .likelihood import MeasurementRecord

__all__ = [
    "UnsupportedRecordError",
    "harmonic",
    "sphere_point",
    "sphere_angles",
    "sphere_quadrature",
    "covariant_coefficient",
    "balanced_basis_coefficient",
    "equator_coefficient",
    "single_basis_coefficient",
    "su2_clebsch_gordan",
    "MomentVector",
    "SymOperator",
    "sym_power",
    "q_representation",
    "p_moments",
    "p_operator",
    "rotate_moments",
    "CovariantRecord",
    "expand_record",
]


class UnsupportedRecordError(NotImplementedError):
    """The record is valid but has no closed-form moment expansion here."""


# --------------------------------------------------------------------------
# harmonics and the sphere


def harmonic(l: int, m: int, theta, phi):
    """``y_lm(theta, phi) = (-i)^m sqrt(4 pi) Y_l^m(theta, phi)``; broadcasts over angles."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"need |m| <= l with l >= 0, got l={l}, m={m}")
    if l == 0:
        val = np.ones(np.broadcast(np.asarray(theta), np.asarray(phi)).shape, dtype=complex)
        return complex(val) if val.ndim == 0 else val
    val =(-1j) ** m * math.sqrt(4 * math.pi) * sph_harm_y(l, m, theta, phi)
    return complex(val) if np.ndim(val) == 0 else val


def sphere_point(theta, phi) -> np.ndarray:
    """Amplitudes ``(..., 2)`` of the pure state at sphere angles ``(theta, phi)``."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    out = np.empty(theta.shape + (2,), dtype=complex)
    out[..., 0] = 1j * np.exp(0.5j * phi) * np.sin(theta / 2)
    out[..., 1] = np.exp(-0.5j * phi) * np.cos(theta / 2)
    return out


def sphere_angles(state) -> tuple[float, float]:
    """Inverse of :func:`sphere_point` (up to global phase); ``phi`` in ``[0, 2 pi)``."""
    v = state.amplitudes if isinstance(state, PureState) else np.asarray(state, dtype=complex)
    v = v / np.linalg.norm(v)
    a0, a1 = v
    theta = 2.0 * math.atan2(abs(a0), abs(a1))
    if abs(a0) < 1e-15 or abs(a1) < 1e-15:
        return theta, 0.0
    phi = (np.angle(a0 / a1) - math.pi / 2) % (2 * math.pi)
    return theta, float(phi)


def sphere_quadrature(n_theta: int, n_phi: int | None = None):
    """Product rule on the sphere: Gauss-Legendre in ``cos(theta)``, uniform in ``phi``.

    Returns flat arrays ``theta, phi, weight`` with weights summing to 1.  The
    rule integrates ``y_lm`` products exactly up to degree ``2 n_theta - 1``
    in ``cos(theta)`` and azimuthal order below ``n_phi``.
    """
    n_phi = 2 * n_theta if n_phi is None else n_phi
    u, wu = np.polynomial.legendre.leggauss(n_theta)
    ph = 2 * math.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(np.arccos(u), ph, indexing="ij")
    W = np.outer(wu / 2, np.full(n_phi, 1.0 / n_phi))
    return T.ravel(), P.ravel(), W.ravel()


# --------------------------------------------------------------------------
# exact coefficients


def covariant_coefficient(n: int, l: int) -> Fraction:
    """``n!(n+1)! / ((n-l)!(n+l+1)!)`` for ``l <= n``, else 0."""
    if n < 1 or l < 0:
        raise ValueError(f"need n >= 1 and l >= 0, got n={n}, l={l}")
    if l > n:
        return Fraction(0)
    f = math.factorial
    return Fraction(f(n) * f(n + 1), f(n - l) * f(n + l + 1))


def equator_coefficient(l: int) -> Fraction:
    """``P_l(0)``: reduced coefficient of the uniform density on the equator."""
    if l < 0:
        raise ValueError("l must be non-negative")
    if l % 2:
        return Fraction(0)
    return Fraction((-1) ** (l // 2) * math.comb(l, l // 2), 2**l)


def balanced_basis_coefficient(n: int, l: int) -> Fraction:
    """Reduced coefficient after ``n/2`` outcomes on each vector of a basis.

    Equals ``P_l(0) * prod_{i=0}^{l-1} (1 - (l - i)/(n + 2 + i))`` for even
    ``l <= n`` and 0 otherwise.
    """
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    if l < 0:
        raise ValueError("l must be non-negative")
    if l % 2 or l > n:
        return Fraction(0)
    prod = Fraction(1)
    for i in range(l):
        prod *= 1 - Fraction(l - i, n + 2 + i)
    return equator_coefficient(l) * prod


def _as_half(x, name: str) -> Fraction:
    f = Fraction(x).limit_denominator(2) if isinstance(x, float) else Fraction(x)
    if (2 * f).denominator != 1 or (isinstance(x, float) and abs(float(f) - x) > 1e-12):
        raise ValueError(f"{name} must be an integer or half-integer, got {x!r}")
    return f


def _fact(x: Fraction) -> int:
    return math.factorial(int(x))


def _cg_signed_square(j1, m1, j2, m2, J, M) -> tuple[int, Fraction]:
    """Sign and exact square of a Clebsch-Gordan coefficient (Racah's formula)."""
    j1, m1, j2, m2, J, M = (
        _as_half(v, k) for v, k in zip((j1, m1, j2, m2, J, M), ("j1", "m1", "j2", "m2", "J", "M"))
    )
    if min(j1, j2, J) < 0 or M != m1 + m2:
        return 0, Fraction(0)
    if not (abs(j1 - j2) <= J <= j1 + j2) or (j1 + j2 + J).denominator != 1:
        return 0, Fraction(0)
    for j, m in ((j1, m1), (j2, m2), (J, M)):
        if abs(m) > j or (j - m).denominator != 1:
            return 0, Fraction(0)
    pre = Fraction(
        (2 * J + 1) * _fact(J + j1 - j2) * _fact(J - j1 + j2) * _fact(j1 + j2 - J),
        _fact(j1 + j2 + J + 1),
    )
    pre *= (
        _fact(J + M) * _fact(J - M) * _fact(j1 - m1) * _fact(j1 + m1) * _fact(j2 - m2) * _fact(j2 + m2)
    )
    terms = (j1 + j2 - J, j1 - m1, j2 + m2, J - j2 + m1, J - j1 - m2)
    kmin = int(max(0, -terms[3], -terms[4]))
    kmax = int(min(terms[0], terms[1], terms[2]))
    s = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (
            math.factorial(k)
            * _fact(terms[0] - k)
            * _fact(terms[1] - k)
            * _fact(terms[2] - k)
            * _fact(terms[3] + k)
            * _fact(terms[4] + k)
        )
        s += Fraction((-1) ** k, den)
    if s == 0:
        return 0, Fraction(0)
    return (1 if s > 0 else -1), pre * s * s


def su2_clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """``<j1 m1; j2 m2 | J M>`` in the Condon-Shortley convention; 0 if forbidden."""
    sign, sq = _cg_signed_square(j1, m1, j2, m2, J, M)
    return sign * math.sqrt(sq)


def _exact_sqrt(x: Fraction) -> Fraction | None:
    p, q = math.isqrt(x.numerator), math.isqrt(x.denominator)
    return Fraction(p, q) if p * p == x.numerator and q * q == x.denominator else None


def single_basis_coefficient(a: int, b: int, l: int) -> Fraction:
    """Reduced coefficient of ``|<u0|x>|^{2a} |<u1|x>|^{2b}`` about the ``u0`` axis.

    Computed from two Clebsch-Gordan coefficients with ``j = n/2``,
    ``M = a - j``:  ``(n+1)/(2l+1) (-1)^b <j j; j -j|l 0> <j M; j -M|l 0>``.
    The product of the two coefficients is rational.
    """
    if a < 0 or b < 0 or a + b < 1 or l < 0:
        raise ValueError(f"need a, b >= 0 with a + b >= 1 and l >= 0, got {(a, b, l)}")
    n = a + b
    j = Fraction(n, 2)
    M = a - j
    s1, q1 = _cg_signed_square(j, j, j, -j, l, 0)
    s2, q2 = _cg_signed_square(j, M, j, -M, l, 0)
    if s1 == 0 or s2 == 0:
        return Fraction(0)
    root = _exact_sqrt(q1 * q2)
    if root is None:  # pragma: no cover - the product is always a perfect square
        raise ArithmeticError("Clebsch-Gordan product is not rational")
    return Fraction(n + 1, 2 * l + 1) * (-1) ** b * s1 * s2 * root


# --------------------------------------------------------------------------
# moment vectors


def _idx(l: int, m: int) -> int:
    return l * l + l + m


@dataclass(frozen=True)
class MomentVector:
    """Coefficients ``c_lm`` for ``l <= l_max``, stored flat in ``(l, m)`` order with ``m`` ascending."""

    l_max: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if self.l_max < 0 or c.shape != ((self.l_max + 1) ** 2,):
            raise ValueError(f"expected {(self.l_max + 1) ** 2} coefficients for l_max={self.l_max}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, l_max: int) -> "MomentVector":
        return cls(l_max, np.zeros((l_max + 1) ** 2, dtype=complex))

    def coeff(self, l: int, m: int) -> complex:
        if not 0 <= l <= self.l_max or abs(m) > l:
            raise ValueError(f"(l, m) = ({l}, {m}) out of range for l_max={self.l_max}")
        return complex(self.coeffs[_idx(l, m)])

    def block(self, l: int) -> np.ndarray:
        return self.coeffs[l * l : (l + 1) ** 2]

    def items(self):
        for l in range(self.l_max + 1):
            for m in range(-l, l + 1):
                yield l, m, complex(self.coeffs[_idx(l, m)])

    def truncated(self, l_max: int) -> "MomentVector":
        if l_max > self.l_max:
            c = np.concatenate([self.coeffs, np.zeros((l_max + 1) ** 2 - self.coeffs.size)])
            return MomentVector(l_max, c)
        return MomentVector(l_max, self.coeffs[: (l_max + 1) ** 2])

    def evaluate(self, theta, phi):
        """Value of ``sum c_lm y_lm`` at sphere angles (complex; real for real functions)."""
        theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
        out = np.zeros(theta.shape, dtype=complex)
        for l, m, c in self.items():
            if c != 0:
                out += c * harmonic(l, m, theta, phi)
        return complex(out) if out.ndim == 0 else out

    def is_real(self, tol: float = 1e-10) -> bool:
        """Check ``c_{l,-m} = (-1)^m conj(c_lm)``."""
        for l in range(self.l_max + 1):
            for m in range(1, l + 1):
                if abs(self.coeff(l, -m) - (-1) ** m * np.conj(self.coeff(l, m))) > tol:
                    return False
        return abs(self.coeffs[0].imag) <= tol

    def to_json(self) -> dict:
        return {
            "l_max": self.l_max,
            "coeffs": [
                {"l": l, "m": m, "re": float(c.real), "im": float(c.imag)} for l, m, c in self.items()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "MomentVector":
        l_max = int(data["l_max"])
        c = np.zeros((l_max + 1) ** 2, dtype=complex)
        for e in data["coeffs"]:
            l, m = int(e["l"]), int(e["m"])
            if not 0 <= l <= l_max or abs(m) > l:
                raise ValueError(f"coefficient ({l}, {m}) out of range for l_max={l_max}")
            c[_idx(l, m)] = complex(float(e["re"]), float(e["im"]))
        return cls(l_max, c)


@lru_cache(maxsize=64)
def _spin_matrices(l: int) -> tuple[np.ndarray, np.ndarray]:
    ms = np.arange(-l, l + 1)
    jz = np.diag(ms).astype(complex)
    jp = np.zeros((2 * l + 1, 2 * l + 1), dtype=complex)
    for i, m in enumerate(ms[:-1]):
        jp[i + 1, i] = math.sqrt(l * (l + 1) - m * (m + 1))
    jy = (jp - jp.conj().T) / 2j
    return jz, jy


def _wigner_d(l: int, theta: float, phi: float) -> np.ndarray:
    jz, jy = _spin_matrices(l)
    return expm(-1j * phi * jz) @ expm(-1j * theta * jy)


def rotate_moments(mv: MomentVector, theta: float, phi: float) -> MomentVector:
    """Moments of ``f(R^{-1} x)`` where ``R`` carries the pole ``theta = 0`` to ``(theta, phi)``.

    Each degree-``l`` block is multiplied by a unitary matrix built from the
    spin-``l`` Wigner matrix ``D(R) = exp(-i phi J_z) exp(-i theta J_y)``,
    conjugated by the ``(-i)^m`` phases of the basis.
    """
    out = np.empty_like(mv.coeffs)
    for l in range(mv.l_max + 1):
        ph = (-1j) ** np.arange(-l, l + 1)
        U = np.conj(ph)[:, None] * _wigner_d(l, theta, phi) * ph[None, :]
        out[l * l : (l + 1) ** 2] = U @ mv.block(l)
    return MomentVector(mv.l_max, out)


# --------------------------------------------------------------------------
# operators on the symmetric subspace


@dataclass(frozen=True)
class SymOperator:
    """Operator on ``Sym^n(C^2)`` in the Dicke basis ``|k>`` (``k`` copies of ``|1>``)."""

    n: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if self.n < 1 or m.shape != (self.n + 1, self.n + 1):
            raise ValueError(f"expected a {self.n + 1}x{self.n + 1} matrix for n={self.n}, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, n: int) -> "SymOperator":
        return cls(n, np.eye(n + 1))

    @classmethod
    def dicke_projector(cls, n: int, k: int) -> "SymOperator":
        m = np.zeros((n + 1, n + 1))
        m[k, k] = 1.0
        return cls(n, m)

    @classmethod
    def product_projector(cls, n: int, state) -> "SymOperator":
        v = sym_power(state, n)
        return cls(n, np.outer(v, v.conj()))

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return bool(np.abs(self.matrix - self.matrix.conj().T).max() <= tol)


def sym_power(state, n: int) -> np.ndarray:
    """Dicke-basis components of ``|x>^{(x) n}``; broadcasts over leading axes."""
    v = state.amplitudes if isinstance(state, PureState) else np.asarray(state, dtype=complex)
    if v.shape[-1] != 2:
        raise ValueError("expected qubit amplitudes")
    k = np.arange(n + 1)
    binom = np.sqrt([math.comb(n, int(i)) for i in k])
    x0, x1 = v[..., 0:1], v[..., 1:2]
    return binom * x0 ** (n - k) * x1**k


def q_representation(op: SymOperator, x) -> complex:
    """``<x|^{(x) n} B |x>^{(x) n}``."""
    v = sym_power(x, op.n)
    if v.ndim != 1:
        raise ValueError("q_representation takes a single state")
    return complex(v.conj() @ op.matrix @ v)


@lru_cache(maxsize=16)
def _p_basis(n: int) -> np.ndarray:
    """``A_lm = int y_lm(x) |x><x|^{(x) n} dx`` for ``l <= n``, shape ``((n+1)^2, n+1, n+1)``."""
    T, P, W = sphere_quadrature(2 * n + 2, 4 * n + 4)
    V = sym_power(sphere_point(T, P), n)
    proj = np.einsum("qi,qj->qij", V, V.conj())
    A = np.empty(((n + 1) ** 2, n + 1, n + 1), dtype=complex)
    for l in range(n + 1):
        for m in range(-l, l + 1):
            A[_idx(l, m)] = np.einsum("q,qij->ij", W * harmonic(l, m, T, P), proj)
    A.setflags(write=False)
    return A


def p_moments(op: SymOperator) -> MomentVector:
    """Coefficients ``p_lm`` of the P-representation ``B = int P_B(x) |x><x|^{(x) n} dx``.

    ``P_B = sum p_lm y_lm`` is unique once restricted to ``l <= n``; the
    returned vector has ``l_max = n``.
    """
    A = _p_basis(op.n)
    norms = np.einsum("kij,kij->k", A.conj(), A).real
    overlaps = np.einsum("kij,ij->k", A.conj(), op.matrix)
    return MomentVector(op.n, overlaps / norms)


def p_operator(mv: MomentVector, n: int) -> SymOperator:
    """Rebuild ``B`` from P-moments (coefficients above ``l = n`` are ignored)."""
    A = _p_basis(n)
    c = mv.truncated(n).coeffs
    return SymOperator(n, np.einsum("k,kij->ij", c, A))


# --------------------------------------------------------------------------
# record expansions


@dataclass(frozen=True)
class CovariantRecord:
    """Outcome ``|z><z|^{(x) n}`` of the covariant measurement on ``Sym^n(C^2)``."""

    n: int
    state: PureState

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.state.dim != 2:
            raise ValueError("covariant records are defined for qubits only")


def _basis_axes(record: MeasurementRecord) -> np.ndarray:
    """First basis vector if the POVM is a rank-one orthonormal basis measurement."""
    els = record.povm.elements
    if len(els) != 2:
        raise UnsupportedRecordError(
            f"moment expansion needs a single two-outcome basis measurement; "
            f"this POVM has {len(els)} outcomes"
        )
    w, v = np.linalg.eigh(els[0])
    if not (abs(w[0]) < 1e-9 and abs(w[1] - 1) < 1e-9):
        raise UnsupportedRecordError("POVM elements are not rank-one projectors")
    return v[:, 1]


def expand_record(record, l_max: int) -> MomentVector:
    """Exact moments of the likelihood density on pure qubit states.

    ``record`` is a :class:`CovariantRecord` or a two-outcome projective
    :class:`MeasurementRecord`.  The density is normalized on the sphere, so
    ``c_00 = 1``.  Other records raise :class:`UnsupportedRecordError`.
    """
    if l_max < 0:
        raise ValueError("l_max must be non-negative")
    if isinstance(record, CovariantRecord):
        th, ph = sphere_angles(record.state)
        c = np.zeros((l_max + 1) ** 2, dtype=complex)
        for l in range(l_max + 1):
            r = float(covariant_coefficient(record.n, l))
            for m in range(-l, l + 1):
                c[_idx(l, m)] = r * np.conj(harmonic(l, m, th, ph))
        return MomentVector(l_max, c)
    if not isinstance(record, MeasurementRecord):
        raise TypeError(f"unsupported record type {type(record).__name__}")
    if record.dim != 2:
        raise ValueError(f"moment expansions are defined for qubits, got d={record.dim}")
    u0 = _basis_axes(record)
    a, b = record.counts
    pole = MomentVector.zeros(l_max).coeffs.copy()
    for l in range(l_max + 1):
        # conj(y_l0) at theta = 0 is sqrt(2l + 1)
        pole[_idx(l, 0)] = float(single_basis_coefficient(a, b, l)) * math.sqrt(2 * l + 1)
    th, ph = sphere_angles(u0)
    return rotate_moments(MomentVector(l_max, pole), th, ph)
