"""Command-line pipeline: simulate, histogram, response, reconstruct, compare.

Exit status is 0 on success, 1 on invalid parameters or files, and 2 on
usage errors (argparse's own convention).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import PhotonEMError, ValidationError
from .estimation import (
    EMConfig,
    bootstrap_errors,
    check_compatible,
    em_reconstruct,
    linear_baseline,
    load_result,
)
from .quadrature import BinGrid, ResponseMatrix, fock_loss_density, response_matrix
from .simulate import (
    Histogram,
    bin_events,
    read_events,
    required_cutoff,
    sample_fock_route,
    sample_gaussian_route,
    write_events,
)
from .states import (
    coherent_distribution,
    distribution_from_file,
    squeezed_vacuum_distribution,
    write_distribution,
)

AUTO_CUTOFF_TAIL = 1e-12
_BENCHMARKS = {
    "coherent": ("coherent", coherent_distribution),
    "squeezed-vacuum": ("squeezed_vacuum", squeezed_vacuum_distribution),
}


def _fmt(x) -> str:
    return f"{x:.17g}"


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _grid(args) -> BinGrid:
    return BinGrid(args.q_min, args.q_max, args.bins, args.overflow)


def _benchmark_distribution(state, mean_photon, n_max=None):
    _, make = _BENCHMARKS[state]
    if n_max is None:
        n_max = required_cutoff(lambda n: make(mean_photon, n).tail_mass, AUTO_CUTOFF_TAIL)
    return make(mean_photon, n_max)


def cmd_simulate(args):
    if args.state.startswith("file:"):
        if args.route != "fock":
            raise ValidationError("a state read from file can only be sampled with --route fock")
        d = distribution_from_file(args.state[5:])
        batch = sample_fock_route(d, args.eta, args.events, args.seed)
        meta = {"state": args.state, "eta": batch.meta["eta"], "route": "fock",
                "n_max": d.n_max}
    elif args.state in _BENCHMARKS:
        kind = _BENCHMARKS[args.state][0]
        if args.route == "gaussian":
            batch = sample_gaussian_route(kind, args.mean_photon, args.eta, args.events,
                                          args.seed)
            meta = dict(batch.meta)
        else:
            d = _benchmark_distribution(args.state, args.mean_photon, args.n_max)
            batch = sample_fock_route(d, args.eta, args.events, args.seed)
            meta = {"state": kind, "mean_photon": float(args.mean_photon),
                    "eta": batch.meta["eta"], "route": "fock", "n_max": d.n_max}
    else:
        raise ValidationError(
            f"unknown state {args.state!r}; use coherent, squeezed-vacuum or file:PATH"
        )
    batch = type(batch)(batch.values, batch.seed, meta)
    write_events(args.out, batch)
    return 0


def cmd_histogram(args):
    batch = read_events(args.input)
    hist = bin_events(batch, _grid(args))
    hist.save(args.out)
    print(f"{hist.total} events: {hist.n_counted} binned, {hist.discarded} discarded, "
          f"{hist.underflow} below and {hist.overflow} above the range", file=sys.stderr)
    return 0


def cmd_response(args):
    grid = _grid(args)
    a = response_matrix(grid, args.n_max, args.eta)
    a.save(args.out)
    print("column sums:", file=sys.stderr)
    for n, s in enumerate(a.column_sums):
        print(f"  n={n:3d} {s:.9f}", file=sys.stderr)
    if args.emit_densities:
        ns = [int(x) for x in args.density_ns.split(",") if x.strip()]
        q = np.linspace(grid.q_min, grid.q_max, args.density_grid)
        cols = [fock_loss_density(n, args.eta, q) for n in ns]
        with open(args.emit_densities, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q"] + [f"n{n}" for n in ns])
            for i, qi in enumerate(q):
                w.writerow([_fmt(qi)] + [_fmt(c[i]) for c in cols])
    return 0


def cmd_reconstruct(args):
    hist = Histogram.load(args.hist)
    a = ResponseMatrix.load(args.response)
    try:
        check_compatible(hist, a)
    except ValidationError as exc:
        raise ValidationError(f"{args.hist} and {args.response} are incompatible: {exc}") from None
    if args.init == "uniform":
        init = "uniform"
    elif args.init.startswith("file:"):
        init = distribution_from_file(args.init[5:])
    else:
        raise ValidationError(f"unknown --init {args.init!r}; use uniform or file:PATH")
    config = EMConfig(n_max=a.n_max, max_iterations=args.iters, init=init,
                      stop_tol=args.stop_tol, record_trace=args.trace == "full")
    result = em_reconstruct(hist, a, config)
    baseline = None
    extra = {}
    if args.baseline == "ls":
        bl = linear_baseline(hist, a)
        baseline = bl.values
        extra["baseline_stderr"] = bl.stderr.tolist()
    errors = None
    if args.bootstrap:
        boot = bootstrap_errors(hist, a, config, args.bootstrap, args.seed)
        errors = boot.std
        extra["bootstrap"] = {"resamples": boot.n_resamples, "failed": boot.n_failed,
                              "seed": args.seed}
    d = result.to_dict(baseline, errors)
    d.update(extra)
    Path(args.out).write_text(json.dumps(d) + "\n")
    print(f"{result.iterations_run} iterations, log-likelihood {result.loglik_final:.6f}, "
          f"KKT residual {result.kkt_residual:.3e}", file=sys.stderr)
    return 0


def _tv(a, b):
    m = max(len(a), len(b))
    a = np.pad(np.asarray(a, float), (0, m - len(a)))
    b = np.pad(np.asarray(b, float), (0, m - len(b)))
    return 0.5 * float(np.abs(a - b).sum())


def cmd_compare(args):
    truth = np.asarray(distribution_from_file(args.truth))
    res = load_result(args.result)
    em = np.asarray(res["rho"])
    baseline = np.asarray(res["baseline"]) if "baseline" in res else None
    em2 = np.asarray(load_result(args.result2)["rho"]) if args.result2 else None

    columns = {"truth": truth, "em": em}
    if baseline is not None:
        columns["baseline"] = baseline
    if em2 is not None:
        columns["em2"] = em2
    size = min(len(v) for v in columns.values())
    if any(len(v) != size for v in columns.values()):
        _warn("cutoffs differ ("
              + ", ".join(f"{k}: n_max={len(v) - 1}" for k, v in columns.items())
              + f"); table restricted to n <= {size - 1}")

    names = list(columns)[1:]
    header = ["n", "truth"] + names + [f"abs_error_{k}" for k in names]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n in range(size):
            row = [n, _fmt(truth[n])] + [_fmt(columns[k][n]) for k in names]
            row += [_fmt(abs(columns[k][n] - truth[n])) for k in names]
            w.writerow(row)
        for k in names:
            fh.write(f"# tv_{k},{_fmt(_tv(columns[k], truth))}\n")
    return 0


def cmd_pipeline(args):
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    common = ["--q-min", str(args.q_min), "--q-max", str(args.q_max),
              "--bins", str(args.bins), "--overflow", args.overflow]
    truth = _benchmark_distribution(args.state, args.mean_photon)
    write_distribution(work / "truth.txt", truth,
                       [f"state: {args.state}", f"mean_photon: {args.mean_photon}"])
    steps = [
        ["simulate", "--state", args.state, "--mean-photon", str(args.mean_photon),
         "--eta", str(args.eta), "--events", str(args.events), "--seed", str(args.seed),
         "--route", args.route, "--out", str(work / "events.txt")],
        ["histogram", "--in", str(work / "events.txt"), *common,
         "--out", str(work / "histogram.json")],
        ["response", "--n-max", str(args.n_max), "--eta", str(args.eta), *common,
         "--out", str(work / "response.json")],
        ["reconstruct", "--hist", str(work / "histogram.json"),
         "--response", str(work / "response.json"), "--iters", str(args.iters),
         "--baseline", args.baseline, "--seed", str(args.seed),
         "--out", str(work / "result.json")],
        ["compare", "--truth", str(work / "truth.txt"), "--result", str(work / "result.json"),
         "--out", str(work / "compare.csv")],
    ]
    for argv in steps:
        code = main(argv)
        if code:
            return code
    return 0


def _add_grid(p):
    p.add_argument("--q-min", type=float, default=-5.0)
    p.add_argument("--q-max", type=float, default=5.0)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--overflow", choices=["include", "discard"], default="include")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonem",
        description="Random-phase homodyne simulation and maximum-likelihood "
                    "reconstruction of photon statistics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate homodyne events")
    p.add_argument("--state", required=True,
                   help="coherent, squeezed-vacuum or file:PATH")
    p.add_argument("--mean-photon", type=float, default=1.0)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--events", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--route", choices=["gaussian", "fock"], default="gaussian")
    p.add_argument("--n-max", type=int, default=None,
                   help="Fock cutoff for --route fock (default: tail below 1e-12)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("histogram", help="bin an event file")
    p.add_argument("--in", dest="input", required=True)
    _add_grid(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("response", help="build the response matrix")
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--eta", type=float, required=True)
    _add_grid(p)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-densities", default=None, metavar="PATH")
    p.add_argument("--density-ns", default="0,1,2,3,4,5")
    p.add_argument("--density-grid", type=int, default=1001)
    p.set_defaults(func=cmd_response)

    p = sub.add_parser("reconstruct", help="EM reconstruction of a histogram")
    p.add_argument("--hist", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--iters", type=int, default=8000)
    p.add_argument("--init", default="uniform", help="uniform or file:PATH")
    p.add_argument("--stop-tol", type=float, default=0.0)
    p.add_argument("--trace", choices=["none", "full"], default="none")
    p.add_argument("--baseline", choices=["none", "ls"], default="none")
    p.add_argument("--bootstrap", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("compare", help="tabulate reconstructions against the truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--result2", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pipeline", help="run simulate through compare in one go")
    p.add_argument("--state", choices=sorted(_BENCHMARKS), default="coherent")
    p.add_argument("--mean-photon", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.85)
    p.add_argument("--events", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--route", choices=["gaussian", "fock"], default="gaussian")
    _add_grid(p)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--iters", type=int, default=8000)
    p.add_argument("--baseline", choices=["none", "ls"], default="ls")
    p.add_argument("--workdir", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PhotonEMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KeyError, TypeError) as exc:
        print(f"error: malformed input file ({exc!r})", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
