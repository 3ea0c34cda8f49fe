"""Density matrices, POVMs, fidelity-type metrics and Hilbert-Schmidt sampling.

All matrix functions go through :func:`numpy.linalg.eigh`; eigenvalues that
drift slightly negative (down to ``-EIG_CLIP``) are clipped to zero before
square roots are taken.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "HERMITIAN_TOL",
    "EIG_CLIP",
    "COMPLETENESS_TOL",
    "DensityMatrix",
    "PureState",
    "Povm",
    "PovmReport",
    "fidelity",
    "fidelity_many",
    "purified_distance",
    "purified_distance_many",
    "povm_seminorm",
    "povm_validate",
    "sample_hilbert_schmidt",
    "sample_hilbert_schmidt_batch",
    "sample_pure_haar",
    "random_unitary",
    "sqrtm_psd",
    "bloch_vector",
    "from_bloch",
    "pauli_povm",
    "basis_povm",
]

HERMITIAN_TOL = 1e-10
EIG_CLIP = 1e-10
COMPLETENESS_TOL = 1e-9
_NOISE_FLOOR = 16 * np.finfo(float).eps

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULIS = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex)
    arr.setflags(write=False)
    return arr


def _hermitian_residual(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


@dataclass(frozen=True)
class DensityMatrix:
    """A ``d x d`` positive semi-definite matrix of unit trace.

    Construction checks the invariants (Hermitian, eigenvalues above
    ``-EIG_CLIP``, unit trace) and raises :class:`ValueError` otherwise.
    """

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if _hermitian_residual(m) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > HERMITIAN_TOL:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        if np.linalg.eigvalsh(m).min() < -EIG_CLIP:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def maximally_mixed(cls, d: int) -> "DensityMatrix":
        return cls(np.eye(d, dtype=complex) / d)

    @classmethod
    def from_unnormalized(cls, m) -> "DensityMatrix":
        """Hermitize, trace-normalize and wrap a PSD matrix."""
        m = np.asarray(m, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        return cls(m / np.trace(m).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


@dataclass(frozen=True)
class PureState:
    """Unit vector in ``C^d`` (up to 1e-12 in norm)."""

    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _frozen(self.amplitudes)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("pure state amplitudes must be a non-empty vector")
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("pure state is not normalized")
        object.__setattr__(self, "amplitudes", v)

    @classmethod
    def normalized(cls, v) -> "PureState":
        v = np.asarray(v, dtype=complex)
        return cls(v / np.linalg.norm(v))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> DensityMatrix:
        v = self.amplitudes
        return DensityMatrix(np.outer(v, v.conj()))


@dataclass(frozen=True)
class PovmReport:
    valid: bool
    psd_violations: tuple[int, ...]
    min_eigenvalues: tuple[float, ...]
    hermiticity_residuals: tuple[float, ...]
    completeness_residual: float
    completeness_argmax: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "psd_violations": list(self.psd_violations),
            "min_eigenvalues": list(self.min_eigenvalues),
            "hermiticity_residuals": list(self.hermiticity_residuals),
            "completeness_residual": self.completeness_residual,
            "completeness_argmax": list(self.completeness_argmax),
        }


def povm_validate(povm: "Povm | Sequence[np.ndarray]") -> PovmReport:
    """Check positivity, Hermiticity and completeness of a set of effects.

    Never raises; problems are reported in the returned :class:`PovmReport`.
    ``completeness_argmax`` is the (0-based) entry where ``sum(E) - I`` is
    largest in absolute value.
    """
    elements = povm.elements if isinstance(povm, Povm) else povm
    try:
        els = np.asarray(elements, dtype=complex)
    except (TypeError, ValueError):
        return PovmReport(False, (), (), (), float("inf"), (0, 0))
    if els.ndim != 3 or els.shape[1] != els.shape[2] or els.shape[0] == 0:
        return PovmReport(False, (), (), (), float("inf"), (0, 0))
    herm = tuple(_hermitian_residual(e) for e in els)
    mins = tuple(float(np.linalg.eigvalsh(0.5 * (e + e.conj().T)).min()) for e in els)
    bad = tuple(i for i, (h, m) in enumerate(zip(herm, mins)) if h > HERMITIAN_TOL or m < -EIG_CLIP)
    resid = np.abs(els.sum(axis=0) - np.eye(els.shape[1]))
    idx = np.unravel_index(int(np.argmax(resid)), resid.shape)
    comp = float(resid[idx])
    return PovmReport(
        valid=not bad and comp <= COMPLETENESS_TOL,
        psd_violations=bad,
        min_eigenvalues=mins,
        hermiticity_residuals=herm,
        completeness_residual=comp,
        completeness_argmax=(int(idx[0]), int(idx[1])),
    )


@dataclass(frozen=True)
class Povm:
    """A finite POVM ``{E_i}`` on ``C^d`` with optional outcome labels."""

    elements: np.ndarray = field(repr=False)
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        els = _frozen(self.elements)
        if els.ndim != 3 or els.shape[1] != els.shape[2] or els.shape[0] == 0:
            raise ValueError(f"POVM elements must have shape (r, d, d), got {els.shape}")
        object.__setattr__(self, "elements", els)
        labels = tuple(self.labels) if self.labels else tuple(f"E{i}" for i in range(els.shape[0]))
        if len(labels) != els.shape[0]:
            raise ValueError("number of labels does not match number of POVM elements")
        object.__setattr__(self, "labels", labels)
        report = povm_validate(els)
        if not report.valid:
            raise ValueError(
                "invalid POVM: "
                f"psd violations at {list(report.psd_violations)}, "
                f"completeness residual {report.completeness_residual:.3g}"
            )

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def __len__(self) -> int:
        return self.elements.shape[0]

    def probabilities(self, sigma) -> np.ndarray:
        """``tr(E_i sigma)`` for one state or a stack of states (last axis = outcome)."""
        s = sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma)
        return np.einsum("kij,...ji->...k", self.elements, s).real

    def span_dimension(self, tol: float = 1e-9) -> int:
        """Real dimension of the linear span of the effects (``d**2`` = complete)."""
        flat = self.elements.reshape(len(self), -1)
        real = np.concatenate([flat.real, flat.imag], axis=1)
        return int(np.linalg.matrix_rank(real, tol=tol))

    def conjugated(self, u: np.ndarray) -> "Povm":
        u = np.asarray(u, dtype=complex)
        return Povm(u @ self.elements @ u.conj().T, self.labels)

    def permuted(self, order: Sequence[int]) -> "Povm":
        order = list(order)
        return Povm(self.elements[order], tuple(self.labels[i] for i in order))


def pauli_povm(axes: str = "xyz") -> Povm:
    """Qubit POVM that picks one of ``axes`` uniformly and measures that Pauli.

    ``pauli_povm("xyz")`` is the six-outcome Pauli POVM (each element is an
    eigenprojector divided by 3).  Labels are ``"x+"``, ``"x-"``, and so on.
    """
    if not axes or any(a not in _PAULIS for a in axes) or len(set(axes)) != len(axes):
        raise ValueError(f"axes must be distinct letters from 'xyz', got {axes!r}")
    k = len(axes)
    els, labels = [], []
    for a in axes:
        p = _PAULIS[a]
        for sign, tag in ((1, "+"), (-1, "-")):
            els.append((np.eye(2) + sign * p) / (2 * k))
            labels.append(a + tag)
    return Povm(np.array(els), tuple(labels))


def basis_povm(u=None, d: int = 2) -> Povm:
    """Projective measurement onto the columns of unitary ``u`` (default: computational)."""
    u = np.eye(d, dtype=complex) if u is None else np.asarray(u, dtype=complex)
    els = np.array([np.outer(u[:, i], u[:, i].conj()) for i in range(u.shape[1])])
    return Povm(els, tuple(str(i) for i in range(u.shape[1])))


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    """Square root of a (numerically) PSD Hermitian matrix or stack of them."""
    a = np.asarray(a, dtype=complex)
    w, v = np.linalg.eigh(0.5 * (a + np.swapaxes(a, -1, -2).conj()))
    w = np.where(w < 0, 0.0, w)
    return (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def _as_matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, DensityMatrix) else np.asarray(x, dtype=complex)


def fidelity_many(a, bs: np.ndarray) -> np.ndarray:
    """Fidelity of ``a`` with each matrix in the stack ``bs``."""
    sa = sqrtm_psd(_as_matrix(a))
    bs = np.asarray(bs, dtype=complex)
    if bs.shape[-2:] != sa.shape:
        raise ValueError(f"dimension mismatch: {sa.shape} vs {bs.shape[-2:]}")
    m = sa @ bs @ sa
    w = np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, -1, -2).conj()))
    # eigenvalues at the solver's round-off floor are zero; sqrt would inflate them
    floor = _NOISE_FLOOR * w.shape[-1] * np.abs(w).max(axis=-1, keepdims=True)
    f = np.sqrt(np.where(w <= floor, 0.0, w)).sum(axis=-1)
    return np.clip(f, 0.0, 1.0)


def fidelity(a, b) -> float:
    """``F(a, b) = tr sqrt(sqrt(a) b sqrt(a))``."""
    return float(fidelity_many(a, _as_matrix(b)[None])[0])


def purified_distance_many(a, bs: np.ndarray) -> np.ndarray:
    f = fidelity_many(a, bs)
    return np.sqrt(np.clip(1.0 - f * f, 0.0, 1.0))


def purified_distance(a, b) -> float:
    """``sqrt(1 - F(a, b)^2)``."""
    return float(purified_distance_many(a, _as_matrix(b)[None])[0])


def povm_seminorm(povm: Povm, x) -> float:
    """``sum_i |tr(E_i x)|`` for a Hermitian ``x`` (typically a difference of states)."""
    x = _as_matrix(x)
    if x.shape != (povm.dim, povm.dim):
        raise ValueError(f"dimension mismatch: POVM on C^{povm.dim}, matrix {x.shape}")
    vals = np.einsum("kij,ji->k", povm.elements, x)
    return float(np.abs(vals.real).sum())


def sample_hilbert_schmidt_batch(d: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent Hilbert-Schmidt distributed states as a ``(size, d, d)`` array.

    ``G G^dag / tr(G G^dag)`` with ``G`` a ``d x d`` complex Ginibre matrix; this
    is the partial trace of a Haar-random pure state on ``C^d (x) C^d``.
    """
    if d < 1:
        raise ValueError("d must be positive")
    g = rng.standard_normal((size, d, d)) + 1j * rng.standard_normal((size, d, d))
    rho = g @ np.swapaxes(g, -1, -2).conj()
    tr = np.einsum("nii->n", rho).real
    rho /= tr[:, None, None]
    return 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())


def sample_hilbert_schmidt(d: int, rng: np.random.Generator) -> DensityMatrix:
    return DensityMatrix(sample_hilbert_schmidt_batch(d, 1, rng)[0])


def sample_pure_haar(d: int, rng: np.random.Generator) -> PureState:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return PureState.normalized(v)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase correction."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def bloch_vector(sigma) -> np.ndarray:
    """Physical Bloch vector ``(tr X s, tr Y s, tr Z s)`` of a qubit state."""
    m = _as_matrix(sigma)
    return np.array([np.trace(m @ p).real for p in (PAULI_X, PAULI_Y, PAULI_Z)])


def from_bloch(r) -> DensityMatrix:
    """Qubit state ``(I + r . sigma) / 2``; requires ``|r| <= 1``."""
    x, y, z = (float(c) for c in r)
    return DensityMatrix((np.eye(2) + x * PAULI_X + y * PAULI_Y + z * PAULI_Z) / 2)
