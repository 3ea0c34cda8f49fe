"""Confidence regions built from the likelihood density.

The high-density set is a likelihood level set ``{sigma : L(sigma) >= lambda*}``.
``lambda*`` is the largest level whose Monte Carlo mu-mass clears the required
threshold by three standard errors.  The confidence region is the set of
states within purified distance ``delta`` of that level set.  A region is
stored as the level plus the Hilbert-Schmidt samples that lie above it
("witnesses"); no explicit geometry is kept.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .combinatorics import definetti_constant, delta_radius
from .hilbert import DensityMatrix, Povm, purified_distance, purified_distance_many
from .likelihood import (
    EstimationError,
    LikelihoodSummary,
    MeasurementRecord,
    hs_samples,
    log_likelihood,
    log_likelihood_batch,
    summary_from_loglik,
)

__all__ = [
    "RegionBuildError",
    "ConfidenceRegion",
    "Membership",
    "ContainmentResult",
    "build_region",
    "region_contains",
    "region_extent",
    "MIN_EFFECTIVE_SAMPLES",
]

log = logging.getLogger(__name__)

MIN_EFFECTIVE_SAMPLES = 100
# A failed search whose best distance lands within this of delta is reported
# as boundary-uncertain instead of outside.
BOUNDARY_MARGIN = 1e-3


class RegionBuildError(EstimationError):
    """Too few effective Monte Carlo samples support the high-density set."""


@dataclass(frozen=True)
class ConfidenceRegion:
    record: MeasurementRecord = field(repr=False)
    epsilon: float
    n: int
    d: int
    log_lambda_star: float
    delta: float
    mass_estimate: float
    mass_stderr: float
    mass_required: float
    witnesses: np.ndarray = field(repr=False)
    witness_loglik: np.ndarray = field(repr=False)
    effective_samples: float
    summary: LikelihoodSummary = field(repr=False)

    @property
    def witness_count(self) -> int:
        return int(self.witnesses.shape[0])

    @property
    def full_space(self) -> bool:
        """True when ``delta`` is clamped to 1, i.e. the region is every state."""
        return self.delta >= 1.0

    @property
    def gamma_samples(self) -> list[DensityMatrix]:
        return [DensityMatrix(w) for w in self.witnesses]

    def to_dict(self, include_witnesses: bool = False) -> dict:
        out = {
            "epsilon": self.epsilon,
            "n": self.n,
            "d": self.d,
            "log_lambda_star": self.log_lambda_star,
            "delta": self.delta,
            "delta_clamped": self.full_space,
            "mass_estimate": self.mass_estimate,
            "mass_stderr": self.mass_stderr,
            "mass_required": self.mass_required,
            "witness_count": self.witness_count,
            "effective_samples": self.effective_samples,
        }
        if include_witnesses:
            from .serialization import matrix_to_json

            out["witnesses"] = [matrix_to_json(w) for w in self.witnesses]
        return out


def _tail_budget(n: int, d: int, epsilon: float) -> float:
    return float(Fraction(epsilon) / 2 / definetti_constant(2 * n, d))


def build_region(
    record: MeasurementRecord,
    epsilon: float,
    mc_samples: int = 20_000,
    seed: int = 0,
    threads: int = 1,
    min_effective: float = MIN_EFFECTIVE_SAMPLES,
) -> ConfidenceRegion:
    """Construct the confidence region for ``record`` at confidence ``1 - epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    n, d = record.n, record.dim
    samples = hs_samples(d, mc_samples, seed, threads)
    L = log_likelihood_batch(record, samples)
    summary = summary_from_loglik(record, L, seed)

    order = np.argsort(-L, kind="stable")
    Ls = L[order]
    w = np.exp(Ls - summary.max_log_likelihood)
    W = w.sum()
    w2 = np.square(w)
    # index k-1 <-> keep the top k samples; tails are summed from the small end
    # so the excluded mass keeps full relative precision
    tail_w = np.append(np.cumsum(w[::-1])[::-1][1:], 0.0)
    q = tail_w / W
    s2_in = np.cumsum(w2)
    s2_out = np.append(np.cumsum(w2[::-1])[::-1][1:], 0.0)
    se = np.sqrt(np.clip(s2_out * (1 - q) ** 2 + s2_in * q**2, 0.0, None)) / W
    budget = _tail_budget(n, d, epsilon)
    ok = (q + 3.0 * se <= budget) & np.isfinite(Ls)
    if not ok.any():
        raise RegionBuildError("no likelihood level meets the mass threshold")
    k = int(np.argmax(ok)) + 1
    lam = float(Ls[k - 1])
    # keep ties with the threshold sample
    k = int(np.searchsorted(-Ls, -lam, side="right"))
    kept = w[:k]
    ess = float(kept.sum() ** 2 / np.square(kept).sum())
    if ess < min_effective:
        raise RegionBuildError(
            f"only {ess:.1f} effective samples above the likelihood threshold "
            f"(need {min_effective}); increase mc_samples (currently {mc_samples})"
        )
    idx = order[:k]
    return ConfidenceRegion(
        record=record,
        epsilon=float(epsilon),
        n=n,
        d=d,
        log_lambda_star=lam,
        delta=delta_radius(n, d, epsilon),
        mass_estimate=float(1.0 - q[k - 1]),
        mass_stderr=float(se[k - 1]),
        mass_required=1.0 - budget,
        witnesses=samples[idx],
        witness_loglik=L[idx],
        effective_samples=ess,
        summary=summary,
    )


class Membership(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    BOUNDARY_UNCERTAIN = "boundary-uncertain"


@dataclass(frozen=True)
class ContainmentResult:
    verdict: Membership
    witness: np.ndarray | None = field(default=None, repr=False)
    distance: float | None = None
    how: str = ""

    @property
    def inside(self) -> bool:
        return self.verdict is Membership.INSIDE


def _segment_search(record, lam, start, target, iters=60):
    """Furthest feasible point on the segment start -> target.

    The log-likelihood is concave along segments, so its superlevel set meets
    the segment in an interval containing ``start``.
    """
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if log_likelihood(record, (1 - mid) * start + mid * target) >= lam:
            lo = mid
        else:
            hi = mid
    return (1 - lo) * start + lo * target


def region_contains(region: ConfidenceRegion, sigma, probe_budget: int = 8) -> ContainmentResult:
    """Decide whether ``sigma`` lies in the delta-enlarged high-density set.

    Every ``INSIDE`` verdict carries an explicit witness ``w`` with
    ``L(w) >= lambda*`` and ``P(sigma, w) <= delta``; the witness is re-checked
    before it is reported.
    """
    s = sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma, dtype=complex)
    if s.shape != (region.d, region.d):
        raise ValueError(f"dimension mismatch: region on C^{region.d}, state {s.shape}")
    lam = region.log_lambda_star
    if log_likelihood(region.record, s) >= lam:
        return ContainmentResult(Membership.INSIDE, s, 0.0, "level-set")
    if region.witness_count == 0:
        return ContainmentResult(Membership.OUTSIDE, None, None, "no witnesses")
    dist = purified_distance_many(s, region.witnesses)
    j = int(np.argmin(dist))
    if dist[j] <= region.delta:
        return ContainmentResult(Membership.INSIDE, region.witnesses[j], float(dist[j]), "witness")

    best, best_d = None, math.inf
    for j in np.argsort(dist, kind="stable")[: max(0, probe_budget)]:
        cand = _segment_search(region.record, lam, region.witnesses[j], s)
        if log_likelihood(region.record, cand) < lam:
            continue
        dc = purified_distance(s, cand)
        if dc < best_d:
            best, best_d = cand, dc
    if best is not None and best_d <= region.delta:
        return ContainmentResult(Membership.INSIDE, best, best_d, "search")
    best_d = min(best_d, float(dist.min()))
    if best_d <= region.delta + BOUNDARY_MARGIN:
        return ContainmentResult(Membership.BOUNDARY_UNCERTAIN, best, best_d, "search")
    return ContainmentResult(Membership.OUTSIDE, best, best_d, "search")


def region_extent(region: ConfidenceRegion, povm: Povm) -> float:
    """Largest POVM-seminorm distance between two witnesses.

    The seminorm is the l1 distance of outcome-probability vectors, so the
    maximum over pairs equals the maximum over sign patterns ``s`` of the
    spread of ``s . p`` across witnesses.
    """
    if region.witness_count < 2:
        log.warning("region has fewer than two witnesses; extent reported as 0")
        return 0.0
    p = povm.probabilities(region.witnesses)
    r = p.shape[1]
    if r <= 16:
        # s and -s give the same spread, so fix the first sign
        signs = np.array([(1,) + s for s in itertools.product((1, -1), repeat=r - 1)], dtype=float)
        proj = p @ signs.T
        return float((proj.max(axis=0) - proj.min(axis=0)).max())
    best = 0.0
    for i in range(p.shape[0]):
        best = max(best, float(np.abs(p[i + 1 :] - p[i]).sum(axis=1).max(initial=0.0)))
    return best
