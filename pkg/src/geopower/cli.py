"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 solver failure, 3 too many failed
Monte-Carlo cells (fewer than 99% of cells with under 1% failed replicates).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .design import canonical_params
from .errors import GeoPowerError, SolverError, ZeroSufficientStatistic
from .gof import gof_report
from .models import builtin_names, load_model
from .power import (
    DEFAULT_NSIM,
    DEFAULT_SEED,
    PowerRow,
    PowerTable,
    geometric_power_curve,
    posteriori_alternative,
    power_table,
)
from .sampling import DirichletParams, RngStream, sample_from_alternative
from .scaling import ScalingConfig, mle

EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_PARTIAL = 3


class InputError(Exception):
    pass


# parsing helpers --------------------------------------------------------------

def _read_values(text: str) -> list[str]:
    path = Path(text)
    if path.is_file():
        raw = path.read_text().replace(",", "\n").split()
    else:
        raw = text.replace(";", ",").split(",")
    vals = [v.strip() for v in raw if v.strip() and not v.strip().startswith("#")]
    if not vals:
        raise InputError(f"no values in {text!r}")
    return vals


def parse_floats(text: str) -> list[float]:
    out = []
    for v in _read_values(text):
        if "/" in v:
            num, den = v.split("/")
            out.append(float(num) / float(den))
        else:
            out.append(float(v))
    return out


def parse_counts(text: str) -> np.ndarray:
    vals = [float(v) for v in _read_values(text)]
    if any(v < 0 or v != int(v) for v in vals):
        raise InputError("counts must be non-negative integers")
    return np.array(vals)


def parse_sizes(text: str) -> list[int]:
    """``200:500:20`` (inclusive) or a comma list."""
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        if step <= 0 or start < 1 or stop < start:
            raise InputError(f"bad size range {text!r}")
        return list(range(start, stop + 1, step))
    sizes = [int(float(v)) for v in _read_values(text)]
    if any(n < 1 for n in sizes):
        raise InputError("sample sizes must be positive")
    return sizes


def _fmt(v: float) -> str:
    return f"{v:g}"


def _alternatives(args, model):
    """``(label, ModelSpec)`` pairs from --xi / --odds; the null when neither is given."""
    alts = []
    for text in args.xi or []:
        xi = parse_floats(text)
        alts.append(("xi=" + ";".join(_fmt(v) for v in xi), model.with_offset(xi)))
    for text in args.odds or []:
        odds = parse_floats(text)
        alts.append(("odds=" + ";".join(_fmt(v) for v in odds), model.with_odds(odds)))
    if not alts:
        alts.append(("null", model.null()))
    return alts


def _load(args):
    try:
        return load_model(args.model)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load model {args.model!r}: {exc}") from exc


def _dirichlet(args, model) -> DirichletParams:
    return DirichletParams.symmetric(args.dirichlet_alpha, model.design.n_cells)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# commands ---------------------------------------------------------------------

def _fit(args):
    model = _load(args)
    alts = _alternatives(args, model)
    if len(alts) > 1:
        raise InputError("give at most one offset for fitting")
    model = alts[0][1]
    y = parse_counts(args.data)
    if y.size != model.design.n_cells:
        raise InputError(f"data has {y.size} cells, model has {model.design.n_cells}")
    kind = args.kind or ("poisson" if model.kind == "intensity" else "multinomial")
    trace_rows = []
    trace = None
    if args.trace:
        kmat = model.kernel.matrix.T.astype(float)
        log_xi = np.log(model.offset)
        q = y if kind == "poisson" else y / y.sum()

        def trace(n, log_delta, resid):
            delta = np.exp(log_delta)
            dual = float(np.abs((log_delta - log_xi) @ kmat).max()) if kmat.size else 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                br = float(np.sum(np.where(q > 0, q * np.log(q / delta), 0.0))
                           - (q.sum() - delta.sum()))
            trace_rows.append((len(trace_rows), resid, dual, br))

    fit = mle(model, y, kind, ScalingConfig(), trace)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "residual_mean", "residual_dual", "bregman"])
            for it, r, d, b in trace_rows:
                w.writerow([it, f"{r:.6e}", f"{d:.6e}", f"{b:.6e}"])
    if args.emit_kernel:
        print("kernel:")
        for row in model.kernel.matrix:
            print("  " + " ".join(f"{int(v):d}" for v in row))
    return model, y, kind, fit


def cmd_mle(args) -> int:
    model, y, kind, fit = _fit(args)
    scale = y.sum() if kind == "multinomial" else 1.0
    print(f"model: {model.name or args.model}  kind: {kind}")
    print("fitted: " + " ".join(f"{v:.6f}" for v in fit.fitted))
    if kind == "multinomial":
        print("expected: " + " ".join(f"{v:.6f}" for v in scale * fit.fitted))
    print(f"gamma: {fit.gamma:.6f}")
    print(f"residual_mean: {fit.residual_mean:.6e}")
    print(f"residual_dual: {fit.residual_dual:.6e}")
    if kind == "multinomial":
        print(f"residual_total: {fit.residual_total:.6e}")
    print(f"inner_iters: {fit.inner_iters}")
    print(f"outer_iters: {fit.outer_iters}")
    if args.json:
        payload = {"fitted": fit.fitted.tolist(), "gamma": fit.gamma,
                   "residual_mean": fit.residual_mean, "residual_dual": fit.residual_dual,
                   "residual_total": fit.residual_total, "inner_iters": fit.inner_iters,
                   "outer_iters": fit.outer_iters, "kind": kind}
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def cmd_gof(args) -> int:
    model, y, kind, fit = _fit(args)
    yhat = fit.fitted * (y.sum() if kind == "multinomial" else 1.0)
    rep = gof_report(y, yhat, model.dof)
    for key in ("x2", "g2", "phi", "w", "p_value"):
        print(f"{key}: {getattr(rep, key):.6f}")
    print(f"df: {rep.df}")
    if np.all(y > 0) and model.dof:
        odds = np.exp(canonical_params(y / y.sum(), model.kernel))
        print("observed_odds: " + " ".join(f"{v:.6f}" for v in odds))
    if args.json:
        Path(args.json).write_text(json.dumps(rep.as_dict(), indent=2) + "\n")
    return 0


def _cell_status(rows) -> int:
    healthy = [r.n_failed <= 0.01 * r.n_sim for r in rows]
    for r, ok in zip(rows, healthy):
        if not ok:
            print(f"warning: cell N={r.n} alpha={r.alpha:g} {r.offset_label}: "
                  f"{r.n_failed}/{r.n_sim} replicates failed", file=sys.stderr)
    return 0 if sum(healthy) >= 0.99 * len(healthy) else EXIT_PARTIAL


def write_geometric_csv(path, results, metadata) -> None:
    """``results``: list of (label, epsilon, PowerEstimate)."""
    with open(path, "w", newline="") as fh:
        for k, v in metadata.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "offset_label", "rate", "ci_lo", "ci_hi", "n_sim", "n_failed"])
        for label, eps, est in results:
            w.writerow([_fmt(eps), label, f"{est.rate:.4f}", f"{est.ci95[0]:.4f}",
                        f"{est.ci95[1]:.4f}", est.n_sim, est.n_failed])


def cmd_power(args) -> int:
    model = _load(args)
    null = model.null()
    dirichlet = _dirichlet(args, model)
    out = _out_dir(args)
    mode = args.mode
    meta = {"seed": args.seed, "dirichlet_alpha": _fmt(args.dirichlet_alpha),
            "model": model.name or args.model, "model_hash": model.design.digest(),
            "n_sim": args.nsim}
    if mode == "geometric":
        eps = parse_floats(args.epsilon)
        results = []
        for label, alt in _alternatives(args, model):
            ests = geometric_power_curve(null, alt, eps, args.nsim, dirichlet, args.seed,
                                         jobs=args.jobs)
            results += [(label, e, est) for e, est in zip(eps, ests)]
        path = out / "geometric_power.csv"
        write_geometric_csv(path, results, meta)
        print(f"wrote {path}")
        rows = [PowerRow(0, 0.0, lab, est.rate, *est.ci95, est.n_sim, est.n_failed)
                for lab, _, est in results]
        return _cell_status(rows)

    alphas = parse_floats(args.alpha)
    if mode == "posteriori":
        if not args.data:
            raise InputError("posteriori mode needs --data")
        f0 = parse_counts(args.data)
        alts = [("observed", posteriori_alternative(null, f0))]
        sizes = [int(f0.sum())]
    else:
        alts = _alternatives(args, model)
        if not args.n:
            raise InputError(f"{mode} mode needs --n")
        sizes = parse_sizes(args.n)
        if mode == "cumulative" and len(alts) != 1:
            raise InputError("cumulative mode takes a single alternative; use 'table'")
    table = power_table(null, alts, sizes, alphas, args.nsim, dirichlet, args.seed,
                        jobs=args.jobs)
    table.metadata["dirichlet_alpha"] = _fmt(args.dirichlet_alpha)
    table.metadata["model"] = model.name or args.model
    path = out / f"power_{mode}.csv"
    table.write(path)
    print(f"wrote {path}")
    for r in table.rows:
        print(f"N={r.n} alpha={r.alpha:g} {r.offset_label}: rate={r.rate:.4f} "
              f"ci=({r.ci_lo:.4f}, {r.ci_hi:.4f})")
    if args.target is not None:
        for label, _ in alts:
            for a in alphas:
                n = table.minimal_n(label, a, args.target)
                found = str(n) if n is not None else "not reached"
                print(f"target {args.target:g} {label} alpha={a:g}: minimal N = {found}")
    return _cell_status(table.rows)


def cmd_sample_alt(args) -> int:
    model = _load(args)
    alts = _alternatives(args, model)
    if len(alts) != 1:
        raise InputError("give exactly one offset")
    alt = alts[0][1]
    dirichlet = _dirichlet(args, model)
    fh = open(args.out_file, "w", newline="") if args.out_file else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"p{i + 1}" for i in range(model.design.n_cells)])
        for u in range(args.count):
            pi = sample_from_alternative(alt, dirichlet, RngStream(args.seed, u))
            writer.writerow([f"{v:.12f}" for v in pi.values])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_repro(args) -> int:
    from .repro import ITEMS, run_item
    if args.item not in ITEMS:
        print(f"unknown item {args.item!r}; choose from {', '.join(ITEMS)}", file=sys.stderr)
        return EXIT_INPUT
    run_item(args.item, _out_dir(args), seed=args.seed, n_sim=args.nsim, jobs=args.jobs)
    return 0


# argument parser --------------------------------------------------------------

def _common(p, data=True):
    p.add_argument("--model", required=True,
                   help=f"model JSON file or built-in name ({', '.join(builtin_names())})")
    p.add_argument("--xi", action="append", help="offset vector (comma list or file); repeatable")
    p.add_argument("--odds", action="append",
                   help="odds ratio per kernel row (comma list); repeatable")
    if data:
        p.add_argument("--data", help="counts: comma list or file with one count per line")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geopower",
                                description="Geometric power analysis for log-linear models")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (("mle", cmd_mle, "maximum likelihood fit"),
                            ("gof", cmd_gof, "goodness-of-fit statistics")):
        sp = sub.add_parser(name, help=help_)
        _common(sp)
        sp.add_argument("--kind", choices=["poisson", "multinomial"])
        sp.add_argument("--trace", help="write per-iteration residuals to this CSV")
        sp.add_argument("--json", help="also write the result as JSON")
        sp.add_argument("--emit-kernel", action="store_true", help="print the kernel basis")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("power", help="Monte-Carlo power")
    sp.add_argument("mode", choices=["geometric", "cumulative", "posteriori", "table"])
    _common(sp)
    sp.add_argument("--epsilon", default="0.1,0.2,0.3,0.4")
    sp.add_argument("--alpha", default="0.05")
    sp.add_argument("--n", help="sample sizes, e.g. 200:500:20 or 200,300")
    sp.add_argument("--nsim", type=int, default=DEFAULT_NSIM)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--dirichlet-alpha", type=float, default=1.0)
    sp.add_argument("--target", type=float)
    sp.add_argument("--out", default="out")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_power)

    sp = sub.add_parser("sample-alt", help="draw distributions from an alternative")
    _common(sp, data=False)
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--dirichlet-alpha", type=float, default=1.0)
    sp.add_argument("--out-file")
    sp.set_defaults(func=cmd_sample_alt)

    sp = sub.add_parser("repro", help="reproduce a reference table or worked example")
    sp.add_argument("item")
    sp.add_argument("--out", default="repro_out")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--nsim", type=int, default=DEFAULT_NSIM)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ZeroSufficientStatistic, SolverError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, GeoPowerError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
