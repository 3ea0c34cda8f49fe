"""``tomoregion`` command-line interface.

Exit codes: 0 success, 1 input error, 2 estimation failure, 3 unsupported
feature.  Every command is a pure function of its inputs, flags and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .hilbert import PureState
from .likelihood import EstimationError, normalization_constant, bloch_density_grid
from .mle import mle_estimate
from .moments import CovariantRecord, UnsupportedRecordError, expand_record
from .region import build_region
from .serialization import (
    RecordFormatError,
    dump_json,
    load_record,
    record_from_json,
    record_to_json,
    vector_from_json,
)
from .simulator import CoverageConfig, coverage_experiment

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_UNSUPPORTED = 0, 1, 2, 3

log = logging.getLogger("tomoregion")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; argparse's own status 2 is reserved here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _configure_logging() -> None:
    name = os.environ.get("TOMO_LOG", "warning").lower()
    level = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=level.get(name, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if name not in level:
        log.warning("ignoring unknown TOMO_LOG level %r", name)


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise RecordFormatError("input", f"invalid JSON ({exc})") from exc


def _check_epsilon(eps: float) -> None:
    if not 0.0 < eps < 1.0:
        raise InputError(f"--epsilon must lie in the open interval (0, 1), got {eps}")


def _check_samples(n: int) -> None:
    if n < 1000:
        raise InputError(f"--samples must be at least 1000, got {n}")


def _moments_input(data):
    if isinstance(data, dict) and "covariant" in data:
        cov = data["covariant"]
        if not isinstance(cov, dict) or "n" not in cov or "state" not in cov:
            raise RecordFormatError("covariant", "expected an object with 'n' and 'state'")
        if not isinstance(cov["n"], int) or cov["n"] < 1:
            raise RecordFormatError("covariant.n", "must be a positive integer")
        v = vector_from_json(cov["state"], "covariant.state")
        if v.size != 2:
            raise RecordFormatError("covariant.state", "must have two amplitudes")
        return CovariantRecord(cov["n"], PureState.normalized(v))
    return record_from_json(data)


def cmd_analyze(args) -> int:
    _check_epsilon(args.epsilon)
    _check_samples(args.samples)
    record = load_record(args.input)
    mle = mle_estimate(record)
    region = build_region(record, args.epsilon, args.samples, seed=args.seed, threads=args.threads)
    report = {
        "tool": "tomoregion",
        "version": __version__,
        "seed": args.seed,
        "record": record_to_json(record),
        "mle": mle.to_dict(),
        "normalization": region.summary.to_dict(),
        "region": region.to_dict(),
    }
    if args.lmax is not None:
        report["moments"] = expand_record(record, args.lmax).to_json()
    _write(dump_json(report), args.output)
    return EXIT_OK


def cmd_bloch(args) -> int:
    _check_samples(args.samples)
    if args.grid < 1:
        raise InputError(f"--grid must be positive, got {args.grid}")
    record = load_record(args.input)
    if record.dim != 2:
        raise InputError(f"Bloch grids need a qubit record, got dimension {record.dim}")
    summary = normalization_constant(record, args.samples, seed=args.seed, threads=args.threads)
    grid = bloch_density_grid(record, args.grid, args.surface, summary)
    _write(grid.to_csv(), args.output)
    return EXIT_OK


def cmd_coverage(args) -> int:
    data = _read_json(args.input)
    if args.seed is None and not (isinstance(data, dict) and "seed" in data):
        raise InputError("coverage needs a seed: pass --seed or set 'seed' in the config")
    cfg = CoverageConfig.from_json(data, seed=args.seed, threads=args.threads)
    report = coverage_experiment(cfg)
    out = report.to_json()
    out["version"] = __version__
    _write(dump_json(out), args.output)
    return EXIT_OK


def cmd_moments(args) -> int:
    if args.lmax < 0:
        raise InputError(f"--lmax must be non-negative, got {args.lmax}")
    rec = _moments_input(_read_json(args.input))
    _write(dump_json(expand_record(rec, args.lmax).to_json()), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tomoregion", description="Likelihood densities and confidence regions for tomography data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, stochastic: bool):
        sp.add_argument("--input", required=True, help="input JSON file")
        sp.add_argument("--output", default=None, help="output file (default: stdout)")
        if stochastic:
            sp.add_argument("--seed", type=int, required=True, help="Monte Carlo seed (required)")
            sp.add_argument("--samples", type=int, default=20_000, help="Hilbert-Schmidt samples")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap")

    a = sub.add_parser("analyze", help="MLE, normalization constant and confidence region")
    common(a, True)
    a.add_argument("--epsilon", type=float, default=0.05, help="region has confidence 1 - epsilon")
    a.add_argument("--lmax", type=int, default=None, help="also expand qubit moments up to this degree")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bloch", help="density on a Bloch sphere/ball grid (CSV)")
    common(b, True)
    b.add_argument("--grid", type=int, default=64, help="theta cells (phi gets twice as many)")
    b.add_argument("--surface", action="store_true", help="sphere only (pure states)")
    b.set_defaults(func=cmd_bloch)

    c = sub.add_parser("coverage", help="run a coverage experiment from a JSON config")
    c.add_argument("--input", required=True, help="coverage config JSON")
    c.add_argument("--output", default=None)
    c.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    c.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    c.set_defaults(func=cmd_coverage)

    m = sub.add_parser("moments", help="spherical-harmonic moments of a qubit record")
    m.add_argument("--input", required=True)
    m.add_argument("--output", default=None)
    m.add_argument("--lmax", type=int, default=8)
    m.set_defaults(func=cmd_moments)
    return p


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except RecordFormatError as exc:
        print(f"error: invalid input field '{exc.field}': {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnsupportedRecordError as exc:
        print(f"error: unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except EstimationError as exc:
        print(f"error: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
