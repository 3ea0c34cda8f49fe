"""Monte Carlo check of confidence-region coverage.

Each trial draws a true state, simulates an i.i.d. measurement record, builds
the region and asks whether it contains the truth.  Trial ``i`` uses the
``i``-th child of ``SeedSequence(seed)``, so a report depends only on the
config and not on the number of worker threads.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from .hilbert import (
    DensityMatrix,
    Povm,
    pauli_povm,
    sample_hilbert_schmidt,
    sample_pure_haar,
)
from .likelihood import EstimationError, MeasurementRecord
from .region import Membership, build_region, region_contains

__all__ = [
    "TRUTH_SOURCES",
    "simulate_record",
    "CoverageConfig",
    "TrialDiagnostic",
    "CoverageReport",
    "coverage_experiment",
    "wilson_interval",
]

log = logging.getLogger(__name__)

TRUTH_SOURCES = ("hilbert-schmidt", "fixed", "pure-haar")
PROB_SUM_TOL = 1e-9


def simulate_record(sigma_true, povm: Povm, n: int, rng: np.random.Generator) -> MeasurementRecord:
    """Draw ``n`` i.i.d. outcomes with probabilities ``tr(E_i sigma_true)``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p = np.clip(povm.probabilities(sigma_true), 0.0, None)
    s = p.sum()
    if abs(s - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"outcome probabilities sum to {s!r}, not 1")
    counts = rng.multinomial(n, p / s)
    return MeasurementRecord(povm, tuple(int(c) for c in counts))


def wilson_interval(hits: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    if total < 1:
        return 0.0, 1.0
    ci = binomtest(hits, total).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _povm_to_json(povm: Povm):
    from .serialization import matrix_to_json

    return [{"label": lab, "matrix": matrix_to_json(e)} for lab, e in zip(povm.labels, povm.elements)]


def _povm_from_json(data) -> Povm:
    """``"pauli:<axes>"`` or a list of ``{"label", "matrix"}`` objects."""
    from .serialization import RecordFormatError, matrix_from_json

    if isinstance(data, str):
        if not data.startswith("pauli:"):
            raise RecordFormatError("povm", f"unknown POVM name {data!r}")
        try:
            return pauli_povm(data.split(":", 1)[1])
        except ValueError as exc:
            raise RecordFormatError("povm", str(exc)) from exc
    if not isinstance(data, list) or not data:
        raise RecordFormatError("povm", "expected 'pauli:<axes>' or a list of elements")
    els = [matrix_from_json(e.get("matrix") if isinstance(e, dict) else None, f"povm[{i}]") for i, e in enumerate(data)]
    labels = tuple(str(e.get("label", f"E{i}")) for i, e in enumerate(data))
    try:
        return Povm(np.array(els), labels)
    except ValueError as exc:
        raise RecordFormatError("povm", str(exc)) from exc


@dataclass(frozen=True)
class CoverageConfig:
    povm: Povm
    n: int
    epsilon: float
    trials: int
    truth_source: str
    seed: int
    mc_samples: int = 20_000
    truth_state: DensityMatrix | None = None
    exclude_failures: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.truth_source not in TRUTH_SOURCES:
            raise ValueError(f"truth_source must be one of {TRUTH_SOURCES}, got {self.truth_source!r}")
        if self.truth_source == "fixed":
            if self.truth_state is None:
                raise ValueError("truth_source 'fixed' needs truth_state")
            if self.truth_state.dim != self.povm.dim:
                raise ValueError("truth_state dimension does not match the POVM")
        if self.mc_samples < 1000:
            raise ValueError("mc_samples must be >= 1000")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def d(self) -> int:
        return self.povm.dim

    def to_json(self) -> dict:
        from .serialization import matrix_to_json

        return {
            "d": self.d,
            "povm": _povm_to_json(self.povm),
            "n": self.n,
            "epsilon": self.epsilon,
            "trials": self.trials,
            "truth_source": self.truth_source,
            "truth_state": None if self.truth_state is None else matrix_to_json(self.truth_state.matrix),
            "seed": self.seed,
            "mc_samples": self.mc_samples,
            "exclude_failures": self.exclude_failures,
        }

    @classmethod
    def from_json(cls, data: dict, **overrides) -> "CoverageConfig":
        """Parse a config object; keyword overrides (e.g. ``seed``) take precedence."""
        from .serialization import RecordFormatError, matrix_from_json

        if not isinstance(data, dict):
            raise RecordFormatError("config", "expected a JSON object")
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        for key in ("povm", "n", "epsilon", "trials", "truth_source", "seed"):
            if key not in data:
                raise RecordFormatError(key, "missing")
        for key in ("n", "trials", "seed", "mc_samples"):
            if key in data and (not isinstance(data[key], int) or isinstance(data[key], bool)):
                raise RecordFormatError(key, "must be an integer")
        truth = data.get("truth_state")
        kwargs = dict(
            povm=_povm_from_json(data["povm"]),
            n=data["n"],
            epsilon=float(data["epsilon"]),
            trials=data["trials"],
            truth_source=data["truth_source"],
            seed=data["seed"],
            mc_samples=data.get("mc_samples", 20_000),
            truth_state=None if truth is None else DensityMatrix(matrix_from_json(truth, "truth_state")),
            exclude_failures=bool(data.get("exclude_failures", False)),
            threads=int(data.get("threads", 1)),
        )
        if "d" in data and data["d"] != kwargs["povm"].dim:
            raise RecordFormatError("d", "does not match the POVM dimension")
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise RecordFormatError("config", str(exc)) from exc


@dataclass(frozen=True)
class TrialDiagnostic:
    index: int
    verdict: str
    counts: tuple[int, ...]
    delta: float | None = None
    log_lambda_star: float | None = None
    distance: float | None = None
    error: str | None = None

    @property
    def hit(self) -> bool:
        return self.verdict == Membership.INSIDE.value

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class CoverageReport:
    config: CoverageConfig = field(repr=False)
    trials: int
    hits: int
    failures: int
    denominator: int
    empirical_coverage: float
    wilson_low: float
    wilson_high: float
    diagnostics: tuple[TrialDiagnostic, ...] = field(repr=False)

    def to_json(self) -> dict:
        diags = []
        for d in self.diagnostics:
            row = asdict(d)
            row["counts"] = list(d.counts)
            diags.append(row)
        return {
            "config": self.config.to_json(),
            "trials": self.trials,
            "hits": self.hits,
            "failures": self.failures,
            "denominator": self.denominator,
            "empirical_coverage": self.empirical_coverage,
            "wilson_95": [self.wilson_low, self.wilson_high],
            "diagnostics": diags,
        }


def _draw_truth(cfg: CoverageConfig, rng: np.random.Generator) -> DensityMatrix:
    if cfg.truth_source == "fixed":
        return cfg.truth_state
    if cfg.truth_source == "pure-haar":
        return sample_pure_haar(cfg.d, rng).density()
    return sample_hilbert_schmidt(cfg.d, rng)


def _run_trial(cfg: CoverageConfig, index: int, child: np.random.SeedSequence) -> TrialDiagnostic:
    rng = np.random.default_rng(child)
    truth = _draw_truth(cfg, rng)
    record = simulate_record(truth, cfg.povm, cfg.n, rng)
    mc_seed = int(child.generate_state(1)[0])
    try:
        region = build_region(record, cfg.epsilon, cfg.mc_samples, seed=mc_seed)
    except EstimationError as exc:
        log.info("trial %d: region build failed: %s", index, exc)
        return TrialDiagnostic(index, "build-failed", record.counts, error=str(exc))
    res = region_contains(region, truth)
    return TrialDiagnostic(
        index,
        res.verdict.value,
        record.counts,
        delta=region.delta,
        log_lambda_star=region.log_lambda_star,
        distance=res.distance,
    )


def coverage_experiment(config: CoverageConfig) -> CoverageReport:
    """Run ``config.trials`` independent trials and aggregate the hit rate.

    Boundary-uncertain verdicts and failed region builds count as misses;
    with ``exclude_failures`` the failed builds are dropped from the
    denominator instead.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.trials)
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            diags = list(pool.map(lambda ic: _run_trial(config, *ic), enumerate(children)))
    else:
        diags = [_run_trial(config, i, c) for i, c in enumerate(children)]
    diags.sort(key=lambda d: d.index)
    hits = sum(d.hit for d in diags)
    failures = sum(d.failed for d in diags)
    denom = config.trials - failures if config.exclude_failures else config.trials
    lo, hi = wilson_interval(hits, denom)
    return CoverageReport(
        config=config,
        trials=config.trials,
        hits=hits,
        failures=failures,
        denominator=denom,
        empirical_coverage=hits / denom if denom else float("nan"),
        wilson_low=lo,
        wilson_high=hi,
        diagnostics=tuple(diags),
    )
