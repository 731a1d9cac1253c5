"""Command line front end.

Subcommands: ``simulate`` (write a synthetic dataset), ``fit`` (run the
filter over a dataset CSV), ``select`` (sweep expert counts and compare by
evidence), ``score`` (rank experts for a query point from a saved state).

Exit codes: 0 success, 2 usage or I/O problems, 3 numerical degeneracy.
With a fixed ``--seed`` every command writes byte-identical outputs,
regardless of ``--threads``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import engine
from .dataio import (
    dump_json,
    ground_truth_to_json,
    load_state,
    read_dataset_csv,
    save_state,
    write_allocation_csv,
    write_dataset_csv,
)
from .exceptions import DataFormatError, FilterDegeneracyError
from .expert import Observation
from .synthgen import SynthConfig, empirical_allocation_frequencies, generate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--particles", type=int, default=100, help="particle count N")
    p.add_argument("--a0", type=float, default=1.0)
    p.add_argument("--b0", type=float, default=1.0)
    p.add_argument("--v0-scale", type=float, default=1.0)
    p.add_argument("--resample", choices=("systematic", "multinomial"),
                   default="systematic")
    p.add_argument("--resample-threshold", type=float, default=1.0,
                   help="resample when ESS <= threshold * N (1.0 = always)")
    p.add_argument("--phi-refresh", choices=("sample", "mean"), default="sample")
    p.add_argument("--rejuvenate-every", type=int, default=1,
                   help="observations between shrinkage sweeps (0 = never)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--seed", type=int, default=0)


def _engine_config(args, n_experts: int) -> engine.FilterConfig:
    return engine.FilterConfig(
        n_particles=args.particles,
        n_experts=n_experts,
        a0=args.a0,
        b0=args.b0,
        v0_scale=args.v0_scale,
        resampling=args.resample,
        resample_threshold=args.resample_threshold,
        phi_refresh=args.phi_refresh,
        rejuvenate_every=args.rejuvenate_every,
        n_threads=args.threads,
        seed=args.seed,
    )


def _load_observations(path: str):
    X, y, _ = read_dataset_csv(path)
    return [Observation(x=X[i], y=y[i]) for i in range(X.shape[0])], X.shape


def _emit_report(doc: dict, output: str | None) -> None:
    if output:
        dump_json(doc, output)
    else:
        sys.stdout.write(dump_json(doc))


def cmd_simulate(args) -> int:
    if args.preset == "table1":
        # canonical reproduction setup; equals the SynthConfig defaults
        cfg = SynthConfig(seed=args.seed)
    else:
        cfg = SynthConfig(
            n_experts=args.K,
            n_active=args.s,
            n_obs=args.n,
            dim=args.d,
            inactive_bias=args.b_inactive,
            temperature=args.T,
            noise_var=args.noise_var,
            seed=args.seed,
        )
    obs, truth, z = generate(cfg)
    X = np.stack([o.x for o in obs])
    y = np.array([o.y for o in obs])
    write_dataset_csv(args.output, X, y, z)
    dump_json(ground_truth_to_json(truth), args.truth_out)
    freqs = empirical_allocation_frequencies(z, cfg.n_experts)
    print(
        f"wrote {cfg.n_obs} rows (d={cfg.dim}, K={cfg.n_experts}) to {args.output}; "
        f"active-expert mass {freqs[:cfg.n_active].sum():.3f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_fit(args) -> int:
    data, shape = _load_observations(args.data)
    config = _engine_config(args, args.K)
    t0 = time.perf_counter()
    fs = engine.run(config, data)
    wall = time.perf_counter() - t0
    freqs = engine.allocation_frequencies(fs)
    report = {
        "command": "fit",
        "config": {
            "data": args.data,
            "n_obs": shape[0],
            "dim": shape[1],
            "n_experts": args.K,
            "n_particles": args.particles,
            "a0": args.a0,
            "b0": args.b0,
            "v0_scale": args.v0_scale,
            "resampling": args.resample,
            "resample_threshold": args.resample_threshold,
            "phi_refresh": args.phi_refresh,
            "rejuvenate_every": args.rejuvenate_every,
            "seed": args.seed,
        },
        "log_marginal_likelihood": fs.log_ml,
        "allocation_frequencies": freqs.tolist(),
        "ess": {
            "trace": fs.ess_history,
            "min": min(fs.ess_history),
            "final": fs.ess_history[-1],
        },
        "warnings": {"b_clamp_count": fs.b_clamp_count},
    }
    if args.timing:
        report["wall_time_s"] = wall
    print(f"fit finished in {wall:.1f}s, log evidence {fs.log_ml:.3f}", file=sys.stderr)
    if args.alloc_out:
        write_allocation_csv(args.alloc_out, freqs)
    if args.save_state:
        save_state(fs, args.save_state)
    _emit_report(report, args.output)
    return EXIT_OK


def cmd_select(args) -> int:
    try:
        ks = sorted({int(tok) for tok in args.K.split(",") if tok.strip()})
    except ValueError:
        raise DataFormatError(f"--K expects a comma-separated integer list, got {args.K!r}")
    if not ks:
        raise DataFormatError("--K list is empty")
    data, shape = _load_observations(args.data)
    rows = engine.select_n_experts(_engine_config(args, ks[0]), ks, data)
    winner = engine.select_winner(rows)
    doc = {
        "command": "select",
        "config": {"data": args.data, "n_obs": shape[0], "dim": shape[1],
                   "n_particles": args.particles, "seed": args.seed},
        "rows": [
            {"n_experts": k, "log_marginal_likelihood": v, "winner": k == winner}
            for k, v in rows
        ],
        "winner": winner,
    }
    if args.output and args.output.endswith(".csv"):
        lines = ["K,log_ml,winner"]
        lines += [f"{k},{repr(float(v))},{int(k == winner)}" for k, v in rows]
        from .dataio import _atomic_write

        _atomic_write(args.output, "\n".join(lines) + "\n")
    else:
        _emit_report(doc, args.output)
    return EXIT_OK


def cmd_score(args) -> int:
    fs = load_state(args.state)
    try:
        x = np.array([float(tok) for tok in args.x.split(",")])
    except ValueError:
        raise DataFormatError(f"--x expects comma-separated reals, got {args.x!r}")
    if x.size != fs.dim:
        raise DataFormatError(f"query has {x.size} features, state expects {fs.dim}")
    scores = engine.expert_scores(fs, x, args.alpha)
    k = min(args.top_k, scores.size)
    top = np.argsort(-scores, kind="stable")[:k]
    doc = {
        "command": "score",
        "x": x.tolist(),
        "alpha": args.alpha,
        "scores": scores.tolist(),
        "top_k": [int(i) + 1 for i in top],
    }
    _emit_report(doc, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsmoe", description="Sparse mixture-of-experts filtering toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset")
    p_sim.add_argument("--preset", choices=("table1",), default=None,
                       help="table1: K=10, s=3, n=500, d=5")
    p_sim.add_argument("--K", type=int, default=10)
    p_sim.add_argument("--s", type=int, default=3, help="number of active experts")
    p_sim.add_argument("--n", type=int, default=500)
    p_sim.add_argument("--d", type=int, default=5)
    p_sim.add_argument("--b-inactive", type=float, default=-3.0)
    p_sim.add_argument("--T", type=float, default=0.70)
    p_sim.add_argument("--noise-var", type=float, default=0.25)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--output", default="dataset.csv")
    p_sim.add_argument("--truth-out", default="ground_truth.json")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="run the filter over a dataset CSV")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--K", type=int, required=True, help="number of experts")
    _add_engine_flags(p_fit)
    p_fit.add_argument("--output", default=None, help="report JSON (default stdout)")
    p_fit.add_argument("--alloc-out", default=None,
                       help="allocation-frequency CSV (figure data)")
    p_fit.add_argument("--save-state", default=None, help="filter state snapshot JSON")
    p_fit.add_argument("--timing", action="store_true",
                       help="include wall time in the report (breaks byte-identity)")
    p_fit.set_defaults(func=cmd_fit)

    p_sel = sub.add_parser("select", help="compare expert counts by evidence")
    p_sel.add_argument("--data", required=True)
    p_sel.add_argument("--K", required=True, help="comma-separated list, e.g. 1,2,4")
    _add_engine_flags(p_sel)
    p_sel.add_argument("--output", default=None,
                       help="table JSON, or CSV if the path ends in .csv")
    p_sel.set_defaults(func=cmd_select)

    p_sco = sub.add_parser("score", help="rank experts for a query point")
    p_sco.add_argument("--state", required=True, help="state JSON from fit --save-state")
    p_sco.add_argument("--x", required=True, help="comma-separated query vector")
    p_sco.add_argument("--alpha", type=float, default=0.0,
                       help="uncertainty penalty weight")
    p_sco.add_argument("--top-k", type=int, default=1)
    p_sco.add_argument("--output", default=None)
    p_sco.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FilterDegeneracyError as err:
        print(f"hsmoe: numerical degeneracy: {err}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataFormatError, OSError) as err:
        print(f"hsmoe: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
