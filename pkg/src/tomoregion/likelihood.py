"""The data-analysis density for product-form measurement records.

For a record with counts ``f_i`` on POVM elements ``E_i`` the (unnormalized)
density over states is ``prod_i tr(E_i sigma) ** f_i``.  Its integral over the
Hilbert-Schmidt measure is estimated by plain Monte Carlo, in the log domain
with one max-shift per record.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hilbert import DensityMatrix, Povm, sample_hilbert_schmidt_batch

__all__ = [
    "EstimationError",
    "MeasurementRecord",
    "LikelihoodSummary",
    "BlochGrid",
    "MC_CHUNK",
    "log_likelihood",
    "log_likelihood_batch",
    "hs_samples",
    "normalization_constant",
    "summary_from_loglik",
    "mu_density",
    "mu_density_batch",
    "self_normalization",
    "bloch_density_grid",
    "bloch_states",
    "pure_state_loglik",
]

# Samples are drawn in fixed-size chunks, one child seed per chunk, so the
# sample stream depends only on (seed, total count) and not on thread count.
MC_CHUNK = 4096


class EstimationError(RuntimeError):
    """Raised when a Monte Carlo estimate cannot be formed from the samples."""


@dataclass(frozen=True)
class MeasurementRecord:
    """Outcome counts ``f`` of ``n`` independent uses of ``povm``."""

    povm: Povm
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(int(c) != c for c in self.counts):
            raise ValueError("counts must be integers")
        if len(counts) != len(self.povm):
            raise ValueError(
                f"counts has length {len(counts)} but the POVM has {len(self.povm)} elements"
            )
        if any(c < 0 for c in counts):
            raise ValueError("counts must be non-negative")
        if sum(counts) < 1:
            raise ValueError("record must contain at least one outcome")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def dim(self) -> int:
        return self.povm.dim

    @property
    def frequencies(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.n

    @property
    def key(self) -> str:
        """Content fingerprint; used to match summaries to records."""
        h = hashlib.sha1()
        h.update(np.ascontiguousarray(self.povm.elements).tobytes())
        h.update(np.array(self.counts, dtype=np.int64).tobytes())
        return h.hexdigest()

    def permuted(self, order: Sequence[int]) -> "MeasurementRecord":
        order = list(order)
        return MeasurementRecord(self.povm.permuted(order), tuple(self.counts[i] for i in order))

    def conjugated(self, u) -> "MeasurementRecord":
        return MeasurementRecord(self.povm.conjugated(u), self.counts)


def _states(sigma) -> np.ndarray:
    return sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma, dtype=complex)


def log_likelihood_batch(record: MeasurementRecord, sigmas) -> np.ndarray:
    """``sum_i f_i ln tr(E_i sigma)`` for each state in a ``(..., d, d)`` stack.

    Zero counts contribute nothing; a positive count on a zero-probability
    outcome gives ``-inf``.  Terms are summed in sorted order so that permuting
    the POVM together with the counts leaves the result bit-identical.
    """
    s = _states(sigmas)
    if s.shape[-2:] != (record.dim, record.dim):
        raise ValueError(f"dimension mismatch: record on C^{record.dim}, state shape {s.shape[-2:]}")
    counts = np.array(record.counts, dtype=float)
    active = counts > 0
    probs = record.povm.probabilities(s)[..., active]
    f = counts[active]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, f * np.log(np.where(probs > 0, probs, 1.0)), -np.inf)
    return np.sort(terms, axis=-1).sum(axis=-1)


def log_likelihood(record: MeasurementRecord, sigma) -> float:
    return float(log_likelihood_batch(record, _states(sigma)[None])[0])


def hs_samples(d: int, count: int, seed: int, threads: int = 1) -> np.ndarray:
    """Deterministic stream of ``count`` Hilbert-Schmidt samples for ``seed``."""
    n_chunks = -(-count // MC_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(MC_CHUNK, count - i * MC_CHUNK) for i in range(n_chunks)]

    def draw(i):
        return sample_hilbert_schmidt_batch(d, sizes[i], np.random.default_rng(children[i]))

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(draw, range(n_chunks)))
    else:
        parts = [draw(i) for i in range(n_chunks)]
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class LikelihoodSummary:
    """Monte Carlo estimate of ``ln c`` for one record.

    ``log_c_stderr`` is the standard error of ``ln c`` (equivalently the
    relative standard error of ``c``).
    """

    record_key: str
    log_c: float
    log_c_stderr: float
    sample_count: int
    seed: int
    max_log_likelihood: float
    effective_samples: float

    @property
    def c(self) -> float:
        return math.exp(self.log_c)

    @property
    def c_stderr(self) -> float:
        return self.c * self.log_c_stderr

    def to_dict(self) -> dict:
        return {
            "log_c": self.log_c,
            "log_c_stderr": self.log_c_stderr,
            "c": self.c,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "max_sampled_log_likelihood": self.max_log_likelihood,
            "effective_samples": self.effective_samples,
        }


def summary_from_loglik(record: MeasurementRecord, loglik: np.ndarray, seed: int) -> LikelihoodSummary:
    """Build a :class:`LikelihoodSummary` from log-likelihoods of HS samples."""
    loglik = np.asarray(loglik, dtype=float)
    finite = np.isfinite(loglik)
    if not finite.any():
        raise EstimationError(
            "every sampled state has zero likelihood; the normalization constant cannot be estimated"
        )
    lmax = float(loglik[finite].max())
    w = np.exp(loglik - lmax)  # exp(-inf) -> 0
    n = w.size
    mean = float(w.mean())
    sd = float(w.std(ddof=1)) if n > 1 else 0.0
    ess = float(w.sum() ** 2 / np.square(w).sum())
    return LikelihoodSummary(
        record_key=record.key,
        log_c=lmax + math.log(mean),
        log_c_stderr=sd / math.sqrt(n) / mean,
        sample_count=n,
        seed=int(seed),
        max_log_likelihood=lmax,
        effective_samples=ess,
    )


def normalization_constant(
    record: MeasurementRecord, mc_samples: int = 100_000, seed: int = 0, threads: int = 1
) -> LikelihoodSummary:
    """Estimate ``c = E_sigma[prod_i tr(E_i sigma)^f_i]`` under the HS measure."""
    if mc_samples < 1000:
        raise ValueError("mc_samples must be at least 1000")
    samples = hs_samples(record.dim, mc_samples, seed, threads)
    return summary_from_loglik(record, log_likelihood_batch(record, samples), seed)


def _check_summary(record: MeasurementRecord, summary: LikelihoodSummary) -> None:
    if summary.record_key != record.key:
        raise ValueError("likelihood summary was computed for a different record")


def mu_density_batch(record: MeasurementRecord, sigmas, summary: LikelihoodSummary) -> np.ndarray:
    _check_summary(record, summary)
    return np.exp(log_likelihood_batch(record, sigmas) - summary.log_c)


def mu_density(record: MeasurementRecord, sigma, summary: LikelihoodSummary) -> float:
    """Normalized density ``exp(L(sigma) - ln c)`` with respect to the HS measure."""
    return float(mu_density_batch(record, _states(sigma)[None], summary)[0])


def self_normalization(
    record: MeasurementRecord, summary: LikelihoodSummary, mc_samples: int, seed: int
) -> tuple[float, float]:
    """Integral of the density over fresh HS samples, with its standard error.

    The returned error combines the spread of the fresh samples with the
    uncertainty already carried by ``summary``.
    """
    samples = hs_samples(record.dim, mc_samples, seed)
    vals = mu_density_batch(record, samples, summary)
    mean = float(vals.mean())
    se_fresh = float(vals.std(ddof=1)) / math.sqrt(vals.size)
    se = math.hypot(se_fresh, mean * summary.log_c_stderr)
    return mean, se


def bloch_states(vectors: np.ndarray) -> np.ndarray:
    """Qubit states ``(I + r . sigma) / 2`` for an ``(..., 3)`` array of Bloch vectors."""
    v = np.asarray(vectors, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out = np.empty(v.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = (1 + z) / 2
    out[..., 1, 1] = (1 - z) / 2
    out[..., 0, 1] = (x - 1j * y) / 2
    out[..., 1, 0] = (x + 1j * y) / 2
    return out


def pure_state_loglik(record: MeasurementRecord, theta, phi) -> np.ndarray:
    """Log-likelihood at pure qubit states given by physical Bloch angles."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    n = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
    return log_likelihood_batch(record, bloch_states(n))


GRID_CONVENTION = (
    "Bloch convention: sigma = (I + x X + y Y + z Z)/2; |0> at z=+1, |1> at z=-1, "
    "|+i> at y=+1; theta = polar angle from +z in [0,pi], phi = azimuth from +x in [0,2pi); "
    "values are cell centres; density is mu w.r.t. the normalized Hilbert-Schmidt measure"
)


@dataclass(frozen=True)
class BlochGrid:
    """Density values on a regular (theta, phi) or (r, theta, phi) lattice."""

    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    r: np.ndarray | None = field(repr=False)
    density: np.ndarray = field(repr=False)
    surface_only: bool

    @property
    def shape(self) -> tuple[int, ...]:
        return self.density.shape

    def rows(self):
        """Rows in scan order: r (if any) outermost, then theta, then phi."""
        if self.surface_only:
            for i, t in enumerate(self.theta):
                for j, p in enumerate(self.phi):
                    yield (t, p, self.density[i, j])
        else:
            for k, rr in enumerate(self.r):
                for i, t in enumerate(self.theta):
                    for j, p in enumerate(self.phi):
                        yield (rr, t, p, self.density[k, i, j])

    def to_csv(self) -> str:
        cols = "theta,phi,density" if self.surface_only else "r,theta,phi,density"
        kind = "surface" if self.surface_only else "ball"
        lines = [f"# {kind} grid; {GRID_CONVENTION}", cols]
        lines += [",".join(f"{v:.17g}" for v in row) for row in self.rows()]
        return "\n".join(lines) + "\n"

    def _cell_weights(self) -> np.ndarray:
        dt = math.pi / self.theta.size
        dp = 2 * math.pi / self.phi.size
        w = np.outer(np.sin(self.theta) * dt, np.full(self.phi.size, dp)) / (4 * math.pi)
        return w

    def area_fraction_above(self, fraction: float = 0.5) -> float:
        """Fraction of sphere area where density >= ``fraction`` * maximum (surface grids)."""
        if not self.surface_only:
            raise ValueError("area is defined for surface grids only")
        mask = self.density >= fraction * self.density.max()
        return float(self._cell_weights()[mask].sum())

    def argmax_vector(self) -> np.ndarray:
        """Bloch vector of the first cell (in scan order) attaining the maximum."""
        idx = np.unravel_index(int(np.argmax(self.density)), self.density.shape)
        if self.surface_only:
            rr, (i, j) = 1.0, idx
        else:
            rr, i, j = self.r[idx[0]], idx[1], idx[2]
        t, p = self.theta[i], self.phi[j]
        return rr * np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)])


def bloch_density_grid(
    record: MeasurementRecord,
    grid_resolution: int,
    surface_only: bool,
    summary: LikelihoodSummary,
) -> BlochGrid:
    """Evaluate the density on a Bloch-sphere (or Bloch-ball) lattice.

    ``grid_resolution`` is the number of theta cells; phi gets twice as many,
    and ball grids use ``max(1, grid_resolution // 2)`` radial shells.
    """
    if record.dim != 2:
        raise ValueError("Bloch grids require a qubit record (dimension 2)")
    if grid_resolution < 1:
        raise ValueError("grid_resolution must be positive")
    _check_summary(record, summary)
    nt, nphi = grid_resolution, 2 * grid_resolution
    theta = (np.arange(nt) + 0.5) * math.pi / nt
    phi = (np.arange(nphi) + 0.5) * 2 * math.pi / nphi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    unit = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
    if surface_only:
        dens = mu_density_batch(record, bloch_states(unit), summary)
        return BlochGrid(theta, phi, None, dens, True)
    nr = max(1, grid_resolution // 2)
    r = (np.arange(nr) + 0.5) / nr
    vecs = r[:, None, None, None] * unit[None]
    dens = mu_density_batch(record, bloch_states(vecs), summary)
    return BlochGrid(theta, phi, r, dens, False)
