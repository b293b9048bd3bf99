"""Command-line entry point: ``gamm-r2 <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .io import (
    SchemaError,
    dump_model_spec,
    load_dataset,
    load_model_spec,
    read_draws,
    write_csv,
    write_draws,
    write_json,
)
from .model import Gamm
from .oracle import check_case, random_case
from .partial import PartialSpec, marginal_ratio, partial_r2, partial_table
from .rsq import bayes_r2, decompose_draws, naive_bayes_r2
from .sampler import InitializationError, SamplerConfig, chain_accept_rate, sample_posterior, split_rhat
from .simstudy import DEFAULT_SEED, Section5Config, model_specs, run_section5, simulate_section5

log = logging.getLogger("gamm_r2")


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("GAMM_R2_THREADS")
    return int(env) if env else None


def _sampler_config(args) -> SamplerConfig:
    return SamplerConfig(
        chains=args.chains, warmup=args.warmup, iters=args.iters, seed=args.seed,
        thin=args.thin, threads=_threads(args),
    )


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model(args) -> Gamm:
    spec = load_model_spec(args.model)
    return Gamm(spec, load_dataset(args.data, spec))


def _write_ratio(out: Path, stem: str, summary, table: dict, seed, bins: int, extra=None):
    n = len(next(iter(table.values())))
    cols = list(table)
    write_csv(out / f"{stem}_draws.csv", ["draw_id", *cols],
              ([l, *(table[c][l] for c in cols)] for l in range(n)), seed=seed)
    payload = summary.to_dict()
    if extra:
        payload.update(extra)
    write_json(out / f"{stem}_summary.json", payload, seed=seed)
    counts, edges = summary.histogram(bins)
    write_csv(out / f"{stem}_hist.csv", ["bin_lo", "bin_hi", "count"],
              zip(edges[:-1], edges[1:], counts), seed=seed)


def _r2_outputs(model: Gamm, draws, out: Path, seed, bins: int) -> dict:
    summary = bayes_r2(model, draws)
    ess, rss = decompose_draws(model, draws)
    tss = ess + rss
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(tss > 0, ess / tss, np.nan)
    naive = naive_bayes_r2(model, draws)
    _write_ratio(out, "r2", summary, {"ess": ess, "rss": rss, "tss": tss, "r2": r2},
                 seed, bins, {"naive_r2": naive})
    return summary.to_dict()


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = _out_dir(args.out)
    sim = simulate_section5(Section5Config(n=args.n, seed=args.seed))
    cols = ["y", "x1", "z1", "u1"]
    write_csv(out / "data.csv", cols,
              zip(*(sim.columns[c] for c in cols)), seed=args.seed)
    write_json(out / "truth.json", sim.truth, seed=args.seed)
    for name, spec in model_specs().items():
        dump_model_spec(spec, out / f"{name}.json")
    print(f"wrote {out / 'data.csv'}")
    return 0


def cmd_fit(args) -> int:
    model = _load_model(args)
    out = _out_dir(args.out)
    draws = sample_posterior(model, _sampler_config(args))
    write_draws(out / "draws.csv", model, draws)
    diag = {
        "accept_rate": {str(c): chain_accept_rate(draws, c) for c in draws.accept_rates},
        "block_accept_rates": {str(c): r for c, r in draws.accept_rates.items()},
        "split_rhat": {
            name: split_rhat(col, draws.chain)
            for name, col in zip(model.draw_names(), _columns(model, draws))
        },
        "n_draws": len(draws),
    }
    write_json(out / "fit_summary.json", diag, seed=args.seed)
    if args.with_r2:
        # analyse exactly what a later `r2` run would read back
        reread = read_draws(out / "draws.csv", model)
        _r2_outputs(model, reread, out, reread.seed, args.bins)
    print(f"wrote {len(draws)} draws to {out / 'draws.csv'}")
    return 0


def _columns(model, draws):
    from .io import draws_matrix
    return draws_matrix(model, draws).T


def cmd_r2(args) -> int:
    model = _load_model(args)
    draws = read_draws(args.draws, model)
    out = _out_dir(args.out)
    s = _r2_outputs(model, draws, out, draws.seed, args.bins)
    print(f"R2 mean={s['mean']:.4f} median={s['median']:.4f} "
          f"90% [{s['q05']:.4f}, {s['q95']:.4f}] degenerate={s['n_degenerate']}")
    return 0


def _split_terms(text):
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def cmd_partial(args) -> int:
    model = _load_model(args)
    draws = read_draws(args.draws, model)
    if args.keep is not None:
        part = PartialSpec.keep(model.spec, _split_terms(args.keep))
    else:
        part = PartialSpec.exclude(model.spec, _split_terms(args.exclude))
    out = _out_dir(args.out)
    summary = partial_r2(model, part, draws)
    marg = marginal_ratio(model, part, draws)
    table = partial_table(model, part, draws)
    _write_ratio(out, "partial", summary, table, draws.seed, args.bins,
                 {"kept": list(part.kept), "excluded": list(part.excluded),
                  "marginal_ratio": marg.to_dict()})
    print(f"partial R2 mean={summary.mean:.4f} (excluded: {', '.join(part.excluded) or 'none'})")
    return 0


def cmd_oracle_check(args) -> int:
    rows = []
    if args.model or args.data or args.draws:
        if not (args.model and args.data and args.draws):
            raise SchemaError("oracle-check needs --model, --data and --draws together")
        model = _load_model(args)
        draws = read_draws(args.draws, model)
        part = (PartialSpec.keep(model.spec, _split_terms(args.keep))
                if args.keep is not None else PartialSpec.keep(model.spec, []))
        from .oracle import FuzzCase
        for l in range(min(args.max_draws, len(draws))):
            case = FuzzCase(model.family, model, draws[l], part)
            for r in check_case(case, args.mc_reps, seed=args.seed + l):
                rows.append({"case": l, **r})
    else:
        rng = np.random.default_rng(args.seed)
        for c in range(args.cases):
            case = random_case(rng)
            for r in check_case(case, args.mc_reps, seed=args.seed + c):
                rows.append({"case": c, **r})
    cols = ["case", "family", "formula", "analytic", "mc_mean", "se", "z", "passed"]
    w = sys.stdout
    w.write(f"# gamm_r2 {__version__} seed={args.seed}\n")
    w.write(",".join(cols) + "\n")
    from .io import fmt
    for r in rows:
        w.write(",".join(
            str(r[c]).lower() if isinstance(r[c], (bool, np.bool_)) else
            (r[c] if isinstance(r[c], str) else fmt(r[c])) for c in cols) + "\n")
    rate = np.mean([r["passed"] for r in rows]) if rows else float("nan")
    print(f"pass rate {rate:.4f} over {len(rows)} checks", file=sys.stderr)
    return 0


def cmd_run_section5(args) -> int:
    out = _out_dir(args.out)
    cfg = Section5Config(n=args.n, seed=args.seed)
    report = run_section5(cfg, _sampler_config(args))
    for name, s in report.r2.items():
        write_csv(out / f"r2_{name}.csv", ["draw_id", "r2"], zip(s.draw_ids, s.samples), seed=args.seed)
        counts, edges = s.histogram(args.bins)
        write_csv(out / f"r2_{name}_hist.csv", ["bin_lo", "bin_hi", "count"],
                  zip(edges[:-1], edges[1:], counts), seed=args.seed)
    p = report.partial
    write_csv(out / "partial_r2.csv", ["draw_id", "partial_r2"], zip(p.draw_ids, p.samples), seed=args.seed)
    g = report.smooth_grid
    write_csv(out / "f1_grid.csv", ["u", "true_f1", "post_mean", "q05", "q95"],
              zip(g["u"], g["true_f1"], g["post_mean"], g["q05"], g["q95"]), seed=args.seed)
    write_json(out / "summary.json", report.summary(), seed=args.seed)
    for name, s in report.r2.items():
        print(f"{name}: mean R2 = {s.mean:.4f}")
    print(f"partial R2 (keep intercept, x1) = {p.mean:.4f}")
    return 0


# -- parser ----------------------------------------------------------------------

def _add_sampler_flags(p):
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (falls back to $GAMM_R2_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gamm-r2", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate the negative-binomial study dataset")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="sample the posterior and write draws.csv")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-r2", action="store_true")
    p.add_argument("--bins", type=int, default=30)
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("r2", help="Bayesian R2 of every draw")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--draws", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_r2)

    p = sub.add_parser("partial", help="partial R2 for excluded terms")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--draws", required=True)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--keep", help="comma-separated terms kept in the reduced model")
    g.add_argument("--exclude", help="comma-separated terms left out of the reduced model")
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_partial)

    p = sub.add_parser("oracle-check", help="Monte-Carlo check of the analytic formulas")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--draws")
    p.add_argument("--keep", help="reduced-model terms for the RSS0 check")
    p.add_argument("--max-draws", type=int, default=5)
    p.add_argument("--cases", type=int, default=20, help="fuzz cases when no model is given")
    p.add_argument("--mc-reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("run-section5", help="simulate, fit the three models, report R2")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=30)
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_run_section5)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, SchemaError, KeyError, ValueError, InitializationError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"gamm-r2 {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
