"""Command-line front end: simulate, reduce, validate, dp, moe, denoise.

Exit codes: 0 success, 1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import distributions as D
from .applications import (
    LabeledSample,
    MaskedVector,
    denoise_certificate,
    denoise_parts,
    denoise_transform,
    dp_laplace_to_gaussian,
    moe_settings,
    moe_to_phase_retrieval,
)
from .diagnostics import default_range, tv_histogram
from .reductions import ReductionPlan, plan_from_json, run_reduction
from .rejection import MViolated
from .validation import PRESETS, plan_check, run_suite, simulate_theta

CSV_COLUMNS = ("index", "x", "y", "accepted", "iterations")
HIST_BINS = 200


class UsageError(Exception):
    pass


def fmt(v: float) -> str:
    # shortest round-trip decimal
    return repr(float(v))


def _open_out(path: Optional[str]):
    if path in (None, "-"):
        return sys.stdout
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise UsageError(f"output directory does not exist: {d}")
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _load_plan(args) -> ReductionPlan:
    if args.plan:
        text = args.plan
        if os.path.exists(text):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        try:
            return plan_from_json(text)
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"bad plan document: {exc}") from exc
    if args.preset:
        return PRESETS[args.preset]["plan"]()
    raise UsageError("give --plan or --preset")


def _comment(fh, key: str, payload) -> None:
    fh.write(f"# {key}: {json.dumps(payload, sort_keys=True)}\n")


def _read_csv(path: Optional[str]) -> tuple[list[str], list[dict], list[str]]:
    """Rows of a CSV, skipping leading '#' comment lines (returned separately)."""
    if path in (None, "-"):
        text = sys.stdin.read()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    if not body:
        return [], [], comments
    reader = csv.DictReader(io.StringIO("\n".join(body)))
    return list(reader.fieldnames or []), list(reader), comments


# --- commands ---------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if not args.preset:
        raise UsageError("simulate needs --preset (fig1 or fig2)")
    cfg = PRESETS[args.preset]
    plan = cfg["plan"]()
    K = cfg["K_quick"] if args.quick else cfg["K"]
    summary = {"preset": args.preset, "seed": args.seed, "K": K, "plan": plan.to_dict(), "thetas": {}}
    out_dir = args.out
    if args.format == "csv":
        if not out_dir:
            raise UsageError("simulate --format csv needs --out DIR")
        os.makedirs(out_dir, exist_ok=True)
    for j, th in enumerate(cfg["thetas"]):
        xs, ys, batch = simulate_theta(plan, th, K, args.seed, j, args.threads)
        tgt = plan.target(th)
        tv = tv_histogram(ys, tgt, bins=HIST_BINS)
        summary["thetas"][fmt(th)] = {
            "tv": tv.to_dict(),
            "mean": float(ys.mean()),
            "var": float(ys.var()),
            "target_mean": tgt.mean_hint,
            "target_sd": tgt.sd_hint,
            "rk": batch.summary(),
        }
        if args.format == "csv":
            stem = os.path.join(out_dir, f"{args.preset}_theta{fmt(th)}")
            with _open_out(stem + ".csv") as fh:
                _comment(fh, "plan", plan.to_dict())
                fh.write(",".join(CSV_COLUMNS) + "\n")
                fh.writelines(
                    f"{i},{fmt(x)},{fmt(y)},{int(a)},{int(n)}\n"
                    for i, (x, y, a, n) in enumerate(zip(xs, ys, batch.accepted, batch.iterations))
                )
            _write_hist(stem + "_hist.csv", ys, tgt)
    text = json.dumps(summary, sort_keys=True, indent=2)
    if args.format == "csv":
        with _open_out(os.path.join(out_dir, f"{args.preset}_summary.json")) as fh:
            fh.write(text + "\n")
    else:
        fh = _open_out(args.out)
        fh.write(text + "\n")
        if fh is not sys.stdout:
            fh.close()
    return 0


def _write_hist(path: str, ys: np.ndarray, tgt: D.ScalarDensity) -> None:
    lo, hi = default_range(tgt)
    edges = np.linspace(lo, hi, HIST_BINS + 1)
    counts = np.histogram(ys, bins=edges)[0]
    with _open_out(path) as fh:
        fh.write("bin_lo,bin_hi,count,empirical_density,target_density\n")
        width = edges[1] - edges[0]
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            mid = 0.5 * (a + b)
            fh.write(f"{fmt(a)},{fmt(b)},{int(c)},{fmt(c / (ys.size * width))},{fmt(tgt.pdf(mid))}\n")


def cmd_reduce(args) -> int:
    plan = _load_plan(args)
    fields, rows, _ = _read_csv(args.input)
    if rows and "x" not in fields:
        raise UsageError("input CSV needs an 'x' column")
    try:
        xs = np.array([float(r["x"]) for r in rows], float)
        idx = np.array([int(r["index"]) for r in rows], np.uint64) if "index" in fields else None
    except ValueError as exc:
        raise UsageError(f"bad numeric value in input: {exc}") from exc
    ys, batch = run_reduction(plan, xs, args.seed, threads=args.threads, indices=idx)
    fh = _open_out(args.out)
    _comment(fh, "plan", plan.to_dict())
    _comment(fh, "seed", args.seed)
    out_fields = (fields or ["x"]) + ["y"]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(out_fields)
    for r, y in zip(rows, ys):
        w.writerow([r[f] for f in fields] + [fmt(y)])
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_validate(args) -> int:
    results = run_suite(quick=args.quick, seed=args.seed, threads=args.threads)
    if args.plan or args.preset:
        results.append(plan_check(_load_plan(args), args.seed))
    for r in results:
        print(r.line(), file=sys.stderr)
    report = {"quick": args.quick, "seed": args.seed, "results": [r.to_dict() for r in results],
              "pass": all(r.passed for r in results)}
    fh = _open_out(args.out)
    fh.write(json.dumps(report, sort_keys=True, indent=2, default=float) + "\n")
    if fh is not sys.stdout:
        fh.close()
    return 0 if report["pass"] else 1


def cmd_dp(args) -> int:
    if args.g_out is None:
        raise UsageError("dp needs --g-out")
    res = dp_laplace_to_gaussian(args.g_out, args.b, args.delta, seed=args.seed)
    d = res.to_dict()
    d["seed"] = args.seed
    fh = _open_out(args.out)
    fh.write(json.dumps(d, sort_keys=True) + "\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_moe(args) -> int:
    fields, rows, _ = _read_csv(args.input)
    if not rows:
        raise UsageError("moe needs a non-empty CSV")
    xcols = [f for f in fields if f != "y"]
    if "y" not in fields or not xcols:
        raise UsageError("moe input needs covariate columns and a 'y' column")
    data = [LabeledSample(np.array([float(r[c]) for c in xcols]), float(r["y"])) for r in rows]
    out = moe_to_phase_retrieval(data, args.delta, seed=args.seed)
    fh = _open_out(args.out)
    _comment(fh, "moe", moe_settings(len(data), args.delta).to_dict())
    _comment(fh, "seed", args.seed)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields)
    for r, s in zip(rows, out):
        # covariates are copied as text, so they round-trip exactly
        w.writerow([r[c] if c != "y" else fmt(s.y) for c in fields])
    if fh is not sys.stdout:
        fh.close()
    return 0


def _target_from_args(args) -> D.LogConcaveTarget:
    if args.target == "gaussian":
        return D.gaussian_psi(args.sigma)
    if args.target == "logistic":
        return D.logistic_psi(args.sigma)
    return D.mollified_laplace_psi(args.eta, args.sigma)


def cmd_denoise(args) -> int:
    fields, rows, _ = _read_csv(args.input)
    if rows and "value" not in fields:
        raise UsageError("denoise input needs a 'value' column (use ★ for unobserved entries)")
    try:
        obs = MaskedVector.parse([r["value"] for r in rows])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    target = _target_from_args(args)
    _, _, st = denoise_parts(target, args.eps)
    out = denoise_transform(obs, target, args.eps, seed=args.seed)
    fh = _open_out(args.out)
    meta = dict(st.__dict__, target=target.name, sigma=target.sigma,
                certified_bound=denoise_certificate(obs, target, args.eps))
    _comment(fh, "denoise", meta)
    _comment(fh, "seed", args.seed)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields or ["value"])
    for r, v in zip(rows, out.render()):
        w.writerow([v if f == "value" else r[f] for f in fields])
    if fh is not sys.stdout:
        fh.close()
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "reduce": cmd_reduce,
    "validate": cmd_validate,
    "dp": cmd_dp,
    "moe": cmd_moe,
    "denoise": cmd_denoise,
}


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rkreduce", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--preset", choices=sorted(PRESETS))
    ap.add_argument("--plan", help="plan JSON text or path to a JSON file")
    ap.add_argument("--seed", type=_seed, default=0)
    ap.add_argument("--in", dest="input", help="input CSV (default stdin)")
    ap.add_argument("--out", help="output file, or directory for simulate --format csv")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--quick", action="store_true", help="reduced sample sizes")
    ap.add_argument("--threads", type=int, default=1)
    dp = ap.add_argument_group("dp")
    dp.add_argument("--g-out", type=float)
    dp.add_argument("--b", type=float, default=1.0)
    dp.add_argument("--delta", type=float, default=0.05)
    dn = ap.add_argument_group("denoise")
    dn.add_argument("--target", choices=("gaussian", "logistic", "mollified"), default="gaussian")
    dn.add_argument("--sigma", type=float, default=3.0)
    dn.add_argument("--eta", type=float, default=0.1)
    dn.add_argument("--eps", type=float, default=0.01)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MViolated as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
