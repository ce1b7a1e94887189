"""Command line entry point: ``w2approx approx | exact | bench``.

Exit codes: 0 on success, 1 on bad input or capacity errors, 2 when the
Sinkhorn stage hit its iteration cap (the result document is still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import CapacityError, InvalidInputError, NumericalUnderflowError, PreconditionError
from .exact import EXACT_CAP, certify, exact_ot
from .geometry import normalize, pairwise_sq_dists
from .io import read_instance, save_coupling, save_plan_csv
from .solver import ENGINEERING, SOLVER_RADIUS, THEORY, approx_w2

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2
BENCH_PHASES = ("normalize", "features", "sinkhorn", "rounding", "cost", "total")

log = logging.getLogger("w2approx")


class _Parser(argparse.ArgumentParser):
    # usage errors share the input-error exit code; 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _finite(obj):
    """Recursively replace non-finite floats so the document stays valid JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(doc, out):
    text = json.dumps(_finite(doc), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def result_document(res, coupling_path=None, seed=None):
    diag = res.diagnostics
    return {
        "schemaVersion": SCHEMA_VERSION,
        "command": "approx",
        "n": res.coupling.n,
        "mode": res.params.mode,
        "epsilon": res.params.epsilon,
        "seed": seed,
        "wHatOriginalUnits": res.w_hat,
        "wHatNormalized": res.w_hat_normalized,
        "normalizationScale": res.normalization.scale,
        "params": {
            "eta": res.params.eta,
            "M": res.params.M,
            "sigma": res.params.sigma,
            "delta": res.params.delta,
            "rank": res.params.rank,
        },
        "diagnostics": {
            "converged": res.converged,
            "sinkhornIterations": diag["sinkhorn_iterations"],
            "sinkhornMaxIterations": diag["sinkhorn_max_iterations"],
            "marginalError": diag["marginal_error"],
            "roundingL1Moved": diag["rounding"].l1_moved,
            "phaseTimings": diag["timings"],
        },
        "couplingPath": str(coupling_path) if coupling_path else None,
    }


def cmd_approx(args):
    points, p, q = read_instance(args.input)
    res = approx_w2(points, p, q, args.epsilon, mode=args.mode, eta=args.eta, M=args.M)
    if args.save_coupling:
        save_coupling(args.save_coupling, res.coupling)
    log.info("rank=%d iterations=%d marginal error=%.3g converged=%s",
             res.params.rank, res.diagnostics["sinkhorn_iterations"],
             res.diagnostics["marginal_error"], res.converged)
    _emit(result_document(res, args.save_coupling, args.seed), args.out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_exact(args):
    points, p, q = read_instance(args.input)
    if points.shape[0] > EXACT_CAP:
        raise CapacityError(f"exact solver is capped at n={EXACT_CAP}, got n={points.shape[0]}")
    unit, norm = normalize(points, SOLVER_RADIUS)
    C = pairwise_sq_dists(unit.points)
    sol = exact_ot(C, p, q)
    cert = certify(sol.plan, C, p, q, sol.f, sol.g)
    if args.save_plan:
        save_plan_csv(args.save_plan, sol.plan)
    _emit({
        "schemaVersion": SCHEMA_VERSION,
        "command": "exact",
        "n": int(points.shape[0]),
        "costOriginalUnits": norm.cost_to_original(sol.cost),
        "costNormalized": sol.cost,
        "normalizationScale": norm.scale,
        "certificate": {
            "primalResidual": cert.primal_residual,
            "dualViolation": cert.dual_violation,
            "slacknessViolation": cert.slackness_violation,
            "dualityGap": cert.duality_gap,
            "holds": cert.holds(sol.cost),
        },
        "planPath": str(args.save_plan) if args.save_plan else None,
    }, args.out)
    return EXIT_OK


def synthetic_instance(n, d, rng):
    """Points uniform in the unit ball and two Dirichlet(1) weight vectors."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    points = g * rng.uniform(size=(n, 1)) ** (1.0 / d)
    return points, rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))


def bench_rows(sizes, d, epsilon, mode, eta, M, reps, seed):
    """One row per size with the median of each phase timing over ``reps`` runs."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        runs = []
        for _ in range(reps):
            points, p, q = synthetic_instance(n, d, rng)
            res = approx_w2(points, p, q, epsilon, mode=mode, eta=eta, M=M)
            runs.append(res)
        row = {"n": n, "d": d, "rank": runs[0].params.rank,
               "iterations": int(np.median([r.diagnostics["sinkhorn_iterations"] for r in runs]))}
        for phase in BENCH_PHASES:
            row[phase] = float(np.median([r.diagnostics["timings"][phase] for r in runs]))
        rows.append(row)
    return rows


def cmd_bench(args):
    try:
        sizes = [int(float(s)) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise InvalidInputError(f"--sizes must be a comma-separated list of integers, got {args.sizes!r}") from None
    if not sizes or min(sizes) < 1:
        raise InvalidInputError("--sizes must list positive integers")
    if args.reps < 1:
        raise InvalidInputError("--reps must be >= 1")
    rows = bench_rows(sizes, args.d, args.epsilon, args.mode, args.eta, args.M, args.reps, args.seed)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=["n", "d", "rank", "iterations", *BENCH_PHASES])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _add_mode_flags(sp):
    sp.add_argument("--epsilon", type=float, required=True, help="target additive error")
    sp.add_argument("--mode", choices=[THEORY, ENGINEERING], default=THEORY)
    sp.add_argument("--eta", type=float, help="regularization (engineering mode only)")
    sp.add_argument("--M", type=int, help="Taylor truncation order (engineering mode only)")
    sp.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="w2approx", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("approx", help="approximate W2^2 with a factored coupling")
    sp.add_argument("--input", required=True)
    _add_mode_flags(sp)
    sp.add_argument("--save-coupling", dest="save_coupling")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_approx)

    sp = sub.add_parser("exact", help="exact W2^2 by the transportation simplex (small n)")
    sp.add_argument("--input", required=True)
    sp.add_argument("--save-plan", dest="save_plan")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("bench", help="time the solver on synthetic instances, CSV to stdout")
    sp.add_argument("--sizes", required=True, help="comma-separated list of n")
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--out")
    _add_mode_flags(sp)
    sp.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command != "exact" and args.mode == ENGINEERING and (args.eta is None or args.M is None):
        parser.error("engineering mode requires --eta and --M")
    try:
        return args.func(args)
    except (InvalidInputError, PreconditionError, CapacityError, NumericalUnderflowError,
            OSError) as exc:
        print(f"w2approx: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
