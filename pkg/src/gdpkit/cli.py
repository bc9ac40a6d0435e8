"""Command-line front end.

Commands: calibrate (noise std for a target budget), csbm (synthetic dataset
generation), ingest (citation-format conversion), stats (dataset statistics),
sensitivity (brute-force bound verification), train (one pipeline run), and
sweep (config cross-products with aggregation).  Every command that writes
files also writes a manifest.json recording the resolved arguments, seed,
toolkit version, and wall-clock duration; re-running with the manifest's
arguments reproduces the outputs bit-for-bit apart from the duration itself.

Exit codes: 0 success, 1 verification failure, 2 infeasible or invalid
configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .accounting import (
    BudgetTemplate,
    PrivacyBudget,
    RdpCurve,
    calibrate_noise,
    gdp_budget,
    report_to_dict,
    save_report,
)
from .csbm import DEFAULT_EPS_ARC, CsbmParams, generate
from .errors import GdpkitError, InfeasibleBudgetError
from .experiments import (
    apply_overrides,
    dataset_stats,
    ingest_content_cites,
    load_config_file,
    plan_report,
    resolve_config,
    run_sweep,
    run_training,
)
from .graphs import AdjacencyRelation, load_dataset, save_dataset
from .mechanisms import MechanismParams
from .oracle import bruteforce_dpdgc, bruteforce_gap, orthonormal_weights


def _dump(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2)


def _write_manifest(out_dir: Path, command: str, arguments: dict, seed, started: float) -> None:
    outputs = sorted(
        str(p.relative_to(out_dir))
        for p in out_dir.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    )
    manifest = {
        "command": command,
        "arguments": arguments,
        "seed": seed,
        "toolkit_version": __version__,
        "duration_seconds": time.time() - started,
        "outputs": outputs,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _relation_from_args(args) -> AdjacencyRelation:
    return AdjacencyRelation.parse(args.relation, getattr(args, "k", None))


def cmd_calibrate(args) -> int:
    started = time.time()
    relation = _relation_from_args(args)
    template = BudgetTemplate(
        model=args.model,
        relation=relation,
        gamma1=RdpCurve.linear(args.gamma1),
        gamma2=RdpCurve.linear(args.gamma2),
        D=args.D,
        L=args.L,
        c=args.c,
    )
    try:
        s = calibrate_noise(PrivacyBudget(args.epsilon, args.delta), template)
    except InfeasibleBudgetError as exc:
        print(f"infeasible: {exc} (floor epsilon {exc.floor:.6f})", file=sys.stderr)
        return 2
    report = gdp_budget(
        args.model,
        relation,
        MechanismParams(s=s, c=args.c, L=args.L, D=args.D),
        gamma1=template.gamma1,
        gamma2=template.gamma2,
        delta=args.delta,
    )
    print(repr(s))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_report(report, out / "report.json")
        arguments = {k: getattr(args, k) for k in
                     ("model", "relation", "epsilon", "delta", "D", "k", "L", "c", "gamma1", "gamma2")}
        arguments["calibrated_s"] = s
        _write_manifest(out, "calibrate", arguments, seed=None, started=started)
    else:
        print(_dump(report_to_dict(report)))
    return 0


def cmd_csbm(args) -> int:
    started = time.time()
    params = CsbmParams(
        n=args.n, f=args.f, d=args.d, phi=args.phi, eps_arc=args.eps_arc, seed=args.seed
    )
    dataset = generate(params)
    out = Path(args.out)
    save_dataset(dataset, out, extra_meta={"directed": False, "csbm": params.meta()})
    _write_manifest(
        out,
        "csbm",
        {"n": args.n, "f": args.f, "d": args.d, "phi": args.phi,
         "eps_arc": args.eps_arc, "out": str(out)},
        seed=args.seed,
        started=started,
    )
    print(str(out))
    return 0


def cmd_ingest(args) -> int:
    started = time.time()
    dataset, meta = ingest_content_cites(args.content, args.cites, directed=args.directed)
    out = Path(args.out)
    save_dataset(dataset, out, extra_meta={"directed": args.directed, "ingest": meta})
    _write_manifest(
        out,
        "ingest",
        {"content": str(args.content), "cites": str(args.cites), "directed": args.directed},
        seed=None,
        started=started,
    )
    print(str(out))
    return 0


def cmd_stats(args) -> int:
    started = time.time()
    dataset = load_dataset(args.data)
    stats = dataset_stats(dataset)
    print(_dump(stats))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "stats.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(stats, fh, sort_keys=True, indent=2)
            fh.write("\n")
        _write_manifest(out, "stats", {"data": str(args.data)}, seed=None, started=started)
    return 0


def cmd_sensitivity(args) -> int:
    started = time.time()
    relation = _relation_from_args(args)
    if args.design == "dpdgc":
        weights = orthonormal_weights(args.n, args.c)
        report = bruteforce_dpdgc(
            args.n,
            relation,
            args.r,
            weights,
            exhaustive=args.exhaustive,
            seed=args.seed,
            degree_bound=args.D,
            samples=args.samples,
        )
    else:
        report = bruteforce_gap(
            args.n,
            relation,
            args.r,
            args.D,
            adversarial_H=not args.random,
            exhaustive=args.exhaustive,
            seed=args.seed,
            samples=args.samples,
        )
    print(_dump(report.to_dict()))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.save(out / "sensitivity.json")
        arguments = {
            "design": args.design, "relation": args.relation, "n": args.n,
            "D": args.D, "k": args.k, "c": args.c, "r": args.r,
            "exhaustive": args.exhaustive, "samples": args.samples,
        }
        _write_manifest(out, "sensitivity", arguments, seed=args.seed, started=started)
    return 0 if report.sound else 1


def cmd_train(args) -> int:
    started = time.time()
    config = resolve_config(load_config_file(args.config), args.set)
    if args.dry_run:
        report, resolved = plan_report(config)
        print(_dump(config))
        print(_dump(report_to_dict(report)))
        print(
            _dump(
                {
                    "noise_std": resolved.noise_std,
                    "nu_pretrain": resolved.nu_pretrain,
                    "nu_classifier": resolved.nu_classifier,
                }
            )
        )
        return 0
    out = Path(args.out)
    summary = run_training(config, out)
    _write_manifest(
        out,
        "train",
        {"config": config, "out": str(out)},
        seed=config["seed"],
        started=started,
    )
    print(_dump({"test_acc": summary["test_acc"], "epsilon": summary["epsilon"]}))
    return 0


def cmd_sweep(args) -> int:
    started = time.time()
    config = apply_overrides(load_config_file(args.config), args.set)
    out = Path(args.out)
    rows = run_sweep(config, out, workers=args.workers)
    _write_manifest(
        out,
        "sweep",
        {"config": config, "out": str(out), "workers": args.workers},
        seed=config.get("seed"),
        started=started,
    )
    print(str(out / "results.csv"))
    print(f"{len(rows)} runs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdpkit",
        description="Graph differential privacy toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="solve for the mechanism noise std")
    cal.add_argument("--model", required=True, choices=["dpdgc", "gap", "mlp"])
    cal.add_argument("--relation", required=True, choices=["edge", "node", "nk"])
    cal.add_argument("--epsilon", type=float, required=True)
    cal.add_argument("--delta", type=float, required=True)
    cal.add_argument("--D", type=int, default=None)
    cal.add_argument("--k", type=int, default=None)
    cal.add_argument("--L", type=int, default=1)
    cal.add_argument("--c", type=float, default=1.0)
    cal.add_argument("--gamma1", type=float, default=0.0, help="pretrain optimizer slope")
    cal.add_argument("--gamma2", type=float, default=0.0, help="classifier optimizer slope")
    cal.add_argument("--out", default=None)
    cal.set_defaults(func=cmd_calibrate)

    gen = sub.add_parser("csbm", help="generate a contextual block-model dataset")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--f", type=int, required=True)
    gen.add_argument("--d", type=float, required=True)
    gen.add_argument("--phi", type=float, required=True)
    gen.add_argument("--eps-arc", dest="eps_arc", type=float, default=DEFAULT_EPS_ARC)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_csbm)

    ing = sub.add_parser("ingest", help="convert content/cites files to a dataset directory")
    ing.add_argument("--content", required=True)
    ing.add_argument("--cites", required=True)
    ing.add_argument("--directed", action="store_true")
    ing.add_argument("--out", required=True)
    ing.set_defaults(func=cmd_ingest)

    sta = sub.add_parser("stats", help="dataset statistics")
    sta.add_argument("--data", required=True)
    sta.add_argument("--out", default=None)
    sta.set_defaults(func=cmd_stats)

    sen = sub.add_parser("sensitivity", help="brute-force sensitivity verification")
    sen.add_argument("--design", required=True, choices=["dpdgc", "gap"])
    sen.add_argument("--relation", required=True, choices=["edge", "node", "nk"])
    sen.add_argument("--n", type=int, default=8)
    sen.add_argument("--D", type=int, default=None)
    sen.add_argument("--k", type=int, default=None)
    sen.add_argument("--c", type=float, default=1.0)
    sen.add_argument("--r", type=int, default=0)
    sen.add_argument("--exhaustive", action=argparse.BooleanOptionalAction, default=True)
    sen.add_argument("--random", action="store_true", help="sample replacement rows instead of the adversarial ones")
    sen.add_argument("--samples", type=int, default=10_000)
    sen.add_argument("--seed", type=int, default=0)
    sen.add_argument("--out", default=None)
    sen.set_defaults(func=cmd_sensitivity)

    tra = sub.add_parser("train", help="run one training pipeline")
    tra.add_argument("--config", required=True)
    tra.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    tra.add_argument("--out", default=None)
    tra.add_argument("--dry-run", action="store_true")
    tra.set_defaults(func=cmd_train)

    swe = sub.add_parser("sweep", help="run a config cross-product")
    swe.add_argument("--config", required=True)
    swe.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    swe.add_argument("--out", required=True)
    swe.add_argument("--workers", type=int, default=1)
    swe.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and not args.dry_run and not args.out:
        parser.error("train requires --out unless --dry-run is given")
    try:
        return args.func(args)
    except InfeasibleBudgetError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except GdpkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
