"""Command-line entry point.

Exit status: 0 on success, 1 on usage or input errors, 2 when an audit
finished with some epsilon cells failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from dpmult import dataio, harness
from dpmult.datamodel import PrivacyParams
from dpmult.multiplicity import closed_form_from_score
from dpmult.trainers import noise_scale_for

log = logging.getLogger("dpmult")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2

MECHANISM_NAMES = {"output": "output_perturbation", "objective": "objective_perturbation"}

AUDIT_DEFAULTS = {
    "label_col": "label",
    "group_col": None,
    "positive_label": None,
    "mechanism": "objective",
    "eps": "0.5,1.0,1.5,2.0,2.5",
    "delta": None,
    "lambda_": 0.1,
    "models": 200,
    "seed": 0,
    "split_seed": 0,
    "workers": None,
    "out": "audit_out",
    "alpha": None,
    "rho": None,
    "plan_only": False,
    "no_intercept": False,
    "no_figures": False,
    # solver budget, config file only
    "max_iters": 10_000,
    "grad_tol": 1e-8,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(v) -> str:
    """Float formatting for CSV output: shortest exact round-trip."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=1, allow_nan=False) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# -- synth ------------------------------------------------------------------

def _synthetic_spec(args) -> dataio.SyntheticSpec:
    return dataio.SyntheticSpec(
        mu0=tuple(args.mu0),
        mu1=tuple(args.mu1),
        sigma0=((args.sigma0[0], args.sigma0[1]), (args.sigma0[2], args.sigma0[3])),
        sigma1=((args.sigma1[0], args.sigma1[1]), (args.sigma1[2], args.sigma1[3])),
        n_per_class_train=args.n_train_per_class,
        n_test=args.n_test,
        seed=args.seed,
    )


def cmd_synth(args) -> int:
    if len(args.mu0) != 2 or len(args.mu1) != 2 or len(args.sigma0) != 4 or len(args.sigma1) != 4:
        raise UsageError("means need 2 values and covariances 4 (row-major)")
    try:
        spec = _synthetic_spec(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train, test = dataio.generate_synthetic(spec)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        dataio.save_csv(train, out / "train.csv")
        dataio.save_csv(test, out / "test.csv")
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc}") from None
    print(f"wrote {out / 'train.csv'} ({train.n} rows) and {out / 'test.csv'} ({test.n} rows)")
    return EXIT_OK


# -- plan -------------------------------------------------------------------

def _print_plan(plan: harness.SamplePlan) -> None:
    print(f"alpha={plan.alpha:g} rho={plan.rho:g} k={plan.k}")
    print(f"m = {plan.m_single}  (single example; bound {plan.bound_single:.6f})")
    print(f"m_uniform = {plan.m_uniform}  (all {plan.k} examples; bound {plan.bound_uniform:.6f})")


def cmd_plan(args) -> int:
    if not args.alpha > 0 or not 0 < args.rho < 1 or args.k < 1:
        raise UsageError("need alpha > 0, 0 < rho < 1 and k >= 1")
    _print_plan(harness.plan_sample_size(args.alpha, args.rho, args.k))
    return EXIT_OK


# -- audit ------------------------------------------------------------------

def _merged_audit_options(args) -> dict:
    """Defaults, then the optional JSON config file, then explicit flags."""
    opts = dict(AUDIT_DEFAULTS)
    opts["train"] = opts["test"] = None
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a flat JSON object")
        for key, value in cfg.items():
            k = key.replace("-", "_")
            k = "lambda_" if k == "lambda" else k
            if k not in opts:
                raise UsageError(f"unknown config key {key!r}")
            if k == "eps" and isinstance(value, list):
                value = ",".join(str(v) for v in value)
            opts[k] = value
    for k in opts:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            opts[k] = v
    if opts["workers"] is None:
        env = os.environ.get("DPMULT_WORKERS")
        opts["workers"] = int(env) if env else (os.cpu_count() or 1)
    return opts


def _audit_config(o: dict) -> harness.AuditConfig:
    mech = MECHANISM_NAMES.get(o["mechanism"], o["mechanism"])
    eps = o["eps"]
    try:
        eps = _float_list(eps) if isinstance(eps, str) else [float(e) for e in eps]
    except (argparse.ArgumentTypeError, TypeError, ValueError) as exc:
        raise UsageError(f"bad epsilon grid: {exc}") from None
    delta = o["delta"]
    if delta is None:
        delta = 1e-5 if mech == "output_perturbation" else 0.0
    try:
        return harness.AuditConfig(
            mechanism=mech,
            epsilon_grid=tuple(eps),
            delta=float(delta),
            m_models=int(o["models"]),
            lambda_reg=float(o["lambda_"]),
            root_seed=int(o["seed"]),
            target_alpha=None if o["alpha"] is None else float(o["alpha"]),
            target_rho=None if o["rho"] is None else float(o["rho"]),
            intercept=not o["no_intercept"],
            max_iters=int(o["max_iters"]),
            grad_tol=float(o["grad_tol"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(o: dict):
    if not o["train"]:
        raise UsageError("--train is required")
    load = lambda p: dataio.load_csv(p, o["label_col"], o["group_col"], o["positive_label"])  # noqa: E731
    try:
        train = load(o["train"])
        if o["test"]:
            test = load(o["test"])
        else:
            train, test = dataio.train_test_split(train, 0.75, int(o["split_seed"]))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load dataset: {exc}") from None
    if test.feature_names != train.feature_names:
        raise UsageError("train and test files have different feature columns")
    return train, test


def write_audit_outputs(report: harness.MultiplicityReport, out: Path, test_groups, figures: bool = True):
    out.mkdir(parents=True, exist_ok=True)
    write_json(report.to_dict(), out / "report.json")

    perf_rows = []
    for c in report.cells:
        if not c.ok:
            continue
        for name in ("auc", "accuracy", "f1"):
            p = c.performance[name]
            perf_rows.append((c.epsilon, name, p.mean, p.std, p.ci95_half_width, len(p.per_model)))
    _write_csv(out / "perf_vs_eps.csv", ["epsilon", "metric", "mean", "std", "ci95_half_width", "m"], perf_rows)

    dis_rows = []
    for c in report.cells:
        if not c.ok:
            continue
        for name, v in (("disagreement", c.disagreement), ("viable_range", c.viable_range)):
            dis_rows.append((c.epsilon, name, float(v.mean()), float(v.std()),
                             float(1.96 * v.std() / np.sqrt(v.size)), v.size))
    _write_csv(out / "disagreement_vs_eps.csv",
               ["epsilon", "quantity", "mean", "std", "ci95_half_width", "n_examples"], dis_rows)

    ex_rows = []
    for c in report.cells:
        if not c.ok:
            continue
        for i in range(c.disagreement.size):
            g = test_groups[i] if test_groups is not None else ""
            ex_rows.append((i, g, c.epsilon, float(c.disagreement[i]), float(c.viable_range[i])))
    _write_csv(out / "per_example.csv",
               ["example_index", "group", "epsilon", "disagreement", "viable_range"], ex_rows)

    if figures and any(c.ok for c in report.cells):
        from dpmult import plotting

        plotting.plot_privacy_sweep(report, out / "privacy_sweep.png")
        plotting.plot_disagreement_distribution(report, out / "disagreement_distribution.png")
        plotting.plot_group_disparities(report, out / "group_disparities.png")


def cmd_audit(args) -> int:
    o = _merged_audit_options(args)
    if o["plan_only"] or o["alpha"] is not None:
        if o["alpha"] is None:
            raise UsageError("--plan-only needs --alpha")
        rho = harness.DEFAULT_RHO if o["rho"] is None else float(o["rho"])
        if not float(o["alpha"]) > 0 or not 0 < rho < 1:
            raise UsageError("need alpha > 0 and 0 < rho < 1")
    if o["plan_only"]:
        _print_plan(harness.plan_sample_size(float(o["alpha"]), rho, 1))
        return EXIT_OK
    cfg = _audit_config(o)
    train, test = _load(o)
    train, test, _ = dataio.preprocess(train, test, intercept=cfg.intercept)
    report = harness.run_audit(train, test, cfg, workers=int(o["workers"]))
    out = Path(o["out"])
    try:
        write_audit_outputs(report, out, test.group, figures=not o["no_figures"])
    except OSError as exc:
        raise UsageError(f"cannot write outputs to {out}: {exc}") from None
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    for c in report.cells:
        if c.ok:
            print(f"eps={c.epsilon:g}: mean disagreement {c.disagreement.mean():.4f}, "
                  f"mean AUC {c.performance['auc'].mean:.4f}")
        else:
            print(f"eps={c.epsilon:g}: FAILED ({c.error})")
    print(f"wrote {out / 'report.json'}")
    return EXIT_PARTIAL if report.partial else EXIT_OK


# -- closed-form ------------------------------------------------------------

def closed_form_rows(confidences, sigmas=None, epsilons=None, sensitivity=0.2, delta=1e-5):
    """Disagreement of output perturbation over a (confidence, noise) grid with |x| = 1."""
    if any(not 0 < c < 1 for c in confidences):
        raise ValueError("confidences must lie in (0, 1)")
    rows = []
    if epsilons is not None:
        if any(not e > 0 for e in epsilons):
            raise ValueError("epsilon values must be positive")
        noise = [(noise_scale_for(PrivacyParams(e, delta, sensitivity)), e) for e in epsilons]
    else:
        if any(not s > 0 for s in sigmas):
            raise ValueError("sigma values must be positive")
        noise = [(s, None) for s in sigmas]
    for c in confidences:
        score = math.log(c) - math.log1p(-c)
        for sigma, eps in noise:
            rows.append({
                "confidence": c,
                "score": score,
                "sigma": sigma,
                "epsilon": eps,
                "disagreement": closed_form_from_score(score, sigma),
            })
    return rows


def cmd_closed_form(args) -> int:
    confidences = args.confidences or list(np.round(np.linspace(0.5, 0.99, 50), 10))
    sigmas = args.sigmas
    if args.eps is None and sigmas is None:
        sigmas = list(np.round(np.linspace(0.05, 2.0, 40), 10))
    if args.eps is not None and not 0 < args.delta < 1:
        raise UsageError("--delta must lie in (0, 1) for the epsilon axis")
    try:
        rows = closed_form_rows(confidences, sigmas, args.eps, args.sensitivity, args.delta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        keys = ["confidence", "score", "sigma", "epsilon", "disagreement"]
        _write_csv(out, keys, [[r[k] for k in keys] for r in rows])
        if not args.no_figures:
            from dpmult import plotting

            plotting.plot_closed_form(rows, "epsilon" if args.eps else "sigma", out.with_suffix(".png"))
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from None
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dpmult", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write the two-Gaussian synthetic train/test CSVs")
    s.add_argument("--out", default="data", help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-train-per-class", type=int, default=1000)
    s.add_argument("--n-test", type=int, default=20_000)
    s.add_argument("--mu0", type=_float_list, default=[1.0, 1.0])
    s.add_argument("--mu1", type=_float_list, default=[-1.0, -1.0])
    s.add_argument("--sigma0", type=_float_list, default=[1.0, 0.5, 0.5, 1.0], help="row-major 2x2")
    s.add_argument("--sigma1", type=_float_list, default=[1.0, 0.1, 0.1, 1.0], help="row-major 2x2")
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("audit", help="train private ensembles over an epsilon grid and report multiplicity")
    a.add_argument("--config", help="flat JSON file of option defaults; flags override it")
    a.add_argument("--train", help="training CSV (split 75/25 when --test is omitted)")
    a.add_argument("--test", help="test CSV")
    a.add_argument("--label-col")
    a.add_argument("--group-col")
    a.add_argument("--positive-label", help="label value mapped to 1 (default: labels already 0/1)")
    a.add_argument("--mechanism", choices=sorted(MECHANISM_NAMES))
    a.add_argument("--eps", help="comma-separated epsilon grid")
    a.add_argument("--delta", type=float, help="default 1e-5 for output, 0 for objective")
    a.add_argument("--lambda", dest="lambda_", type=float)
    a.add_argument("--models", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--split-seed", type=int)
    a.add_argument("--workers", type=int, help="default $DPMULT_WORKERS or the CPU count")
    a.add_argument("--out", help="output directory")
    a.add_argument("--alpha", type=float, help="target estimation error")
    a.add_argument("--rho", type=float, help="failure probability (default 0.05)")
    a.add_argument("--plan-only", action="store_true", help="print the sample-size plan and exit")
    a.add_argument("--no-intercept", action="store_true")
    a.add_argument("--no-figures", action="store_true")
    a.set_defaults(func=cmd_audit)

    q = sub.add_parser("plan", help="number of models needed for a target estimation error")
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--rho", type=float, default=0.05)
    q.add_argument("--k", type=int, default=1, help="number of examples covered simultaneously")
    q.set_defaults(func=cmd_plan)

    c = sub.add_parser("closed-form", help="output-perturbation disagreement over a confidence/noise grid")
    c.add_argument("--confidences", type=_float_list, help="non-private confidence values in (0,1)")
    g = c.add_mutually_exclusive_group()
    g.add_argument("--sigmas", type=_float_list)
    g.add_argument("--eps", type=_float_list, help="epsilon axis, converted with --sensitivity/--delta")
    c.add_argument("--sensitivity", type=float, default=0.2)
    c.add_argument("--delta", type=float, default=1e-5)
    c.add_argument("--out", default="closed_form.csv")
    c.add_argument("--no-figures", action="store_true")
    c.set_defaults(func=cmd_closed_form)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dpmult {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
