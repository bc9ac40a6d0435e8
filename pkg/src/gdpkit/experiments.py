"""Run configuration, artifact directories, and sweep execution.

A run is described by a flat JSON config (model, relation, noise or target
budget, optimizer settings, dataset source, split).  Running it produces an
artifact directory with config.json (fully resolved), report.json,
metrics.jsonl (one line per classifier epoch), final.json, weight
checkpoints, and the embedding cache.  A sweep crosses config overrides with
seeds, runs each cell in its own directory, and aggregates a results.csv.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from collections import OrderedDict
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import nn
from .accounting import (
    RdpCurve,
    gdp_budget,
    report_to_dict,
    save_report,
)
from .csbm import CsbmParams, generate
from .errors import ConfigurationError, InvalidInputError
from .graphs import (
    AdjacencyRelation,
    GraphDataset,
    edge_density,
    homophily,
    load_dataset,
)
from .mechanisms import DPDGC, GAP, MLP, MechanismParams
from .models import (
    CACHE_ENV_VAR,
    DpdgcClassifier,
    GapClassifier,
    MlpClassifier,
    confidence_interval,
    evaluate,
    make_transductive_split,
    resolve_noise,
)

DEFAULT_CONFIG = {
    "model": "mlp",
    "relation": "node",
    "k": None,
    "degree_bound": None,
    "epsilon": None,
    "delta": 1e-5,
    "noise_std": None,
    "nu_pretrain": None,
    "nu_classifier": None,
    "budget_split": None,
    "hidden_dim": 64,
    "hops": 2,
    "row_norm_c": 1.0,
    "epochs": 100,
    "learning_rate": 1e-3,
    "clip_norm": 1.0,
    "dropout": 0.0,
    "seed": 0,
    "split_seed": 0,
    "split_fractions": [0.5, 0.25, 0.25],
    "dataset": None,
}

ESTIMATORS = {MLP: MlpClassifier, GAP: GapClassifier, DPDGC: DpdgcClassifier}


def parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``key=value`` strings; dotted keys descend into nested dicts."""
    out = json.loads(json.dumps(config))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        value = parse_override_value(raw)
        target = out
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return out


def resolve_config(config: dict | None, overrides=None) -> dict:
    merged = dict(DEFAULT_CONFIG)
    merged.update(config or {})
    merged = apply_overrides(merged, overrides)
    if merged["model"] not in ESTIMATORS:
        raise ConfigurationError(f"unknown model {merged['model']!r}")
    if merged["dataset"] is None:
        raise ConfigurationError("config needs a dataset block ('path' or 'csbm')")
    return merged


def load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dataset_from_config(config: dict) -> GraphDataset:
    block = config["dataset"]
    if "path" in block:
        return load_dataset(block["path"])
    if "csbm" in block:
        spec = dict(block["csbm"])
        spec.setdefault("seed", config["seed"])
        return generate(CsbmParams(**spec))
    raise ConfigurationError("dataset block needs either 'path' or 'csbm'")


def _estimator_kwargs(config: dict, cache_dir) -> dict:
    kwargs = {
        "relation": config["relation"],
        "k": config["k"],
        "degree_bound": config["degree_bound"],
        "epsilon": config["epsilon"],
        "delta": config["delta"],
        "budget_split": config["budget_split"],
        "hidden_dim": config["hidden_dim"],
        "epochs": config["epochs"],
        "learning_rate": config["learning_rate"],
        "clip_norm": config["clip_norm"],
        "dropout": config["dropout"],
        "seed": config["seed"],
        "cache_dir": cache_dir,
    }
    if config["model"] == MLP:
        kwargs["nu_classifier"] = config["nu_classifier"]
    elif config["model"] == GAP:
        kwargs.update(
            noise_std=config["noise_std"],
            nu_pretrain=config["nu_pretrain"],
            nu_classifier=config["nu_classifier"],
            hops=config["hops"],
        )
    else:
        kwargs.update(
            noise_std=config["noise_std"],
            nu_pretrain=config["nu_pretrain"],
            nu_classifier=config["nu_classifier"],
            row_norm_c=config["row_norm_c"],
        )
    return kwargs


def build_estimator(config: dict, cache_dir=None):
    return ESTIMATORS[config["model"]](**_estimator_kwargs(config, cache_dir))


def plan_report(config: dict, dataset: GraphDataset | None = None):
    """Assemble the report a run would carry, without training.

    The optimizer curves are closed-form in the epoch count and noise
    multipliers, so the full report is known before any gradients flow.
    """
    model = config["model"]
    relation = AdjacencyRelation.parse(config["relation"], config["k"])
    params = MechanismParams(
        s=1.0,
        c=config["row_norm_c"] if model == DPDGC else 1.0,
        L=config["hops"] if model == GAP else 1,
        D=config["degree_bound"],
    )
    resolved = resolve_noise(
        model,
        relation,
        params,
        config["epochs"],
        config["epsilon"],
        config["delta"],
        config["budget_split"],
        noise_std=config["noise_std"],
        nu_pretrain=config["nu_pretrain"],
        nu_classifier=config["nu_classifier"],
    )
    params = MechanismParams(s=resolved.noise_std, c=params.c, L=params.L, D=params.D)

    def optimizer_curve(nu: float) -> RdpCurve:
        if config["epochs"] == 0:
            return RdpCurve.zero()
        if nu == 0:
            return RdpCurve.linear(math.inf, provenance=("non-private",))
        return RdpCurve.linear(config["epochs"] / (2.0 * nu * nu))

    is_edge = relation.kind == "edge"
    if model == MLP:
        gamma1, gamma2 = RdpCurve.zero(), optimizer_curve(resolved.nu_classifier)
    elif is_edge:
        gamma1 = RdpCurve.zero() if model == GAP else optimizer_curve(resolved.nu_pretrain)
        gamma2 = RdpCurve.zero()
    else:
        gamma1 = optimizer_curve(resolved.nu_pretrain)
        gamma2 = optimizer_curve(resolved.nu_classifier)

    report = gdp_budget(
        model,
        relation,
        params,
        gamma1=gamma1,
        gamma2=gamma2,
        delta=config["delta"],
        dataset=dataset,
        adaptive=model == DPDGC,
    )
    return report, resolved


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def run_training(config: dict, out_dir) -> dict:
    """Train one configuration and write the artifact directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    full = dataset_from_config(config)
    dataset, split = make_transductive_split(
        full, seed=config["split_seed"], fractions=tuple(config["split_fractions"])
    )

    cache_dir = os.environ.get(CACHE_ENV_VAR) or (out_dir / "cache")
    estimator = build_estimator(config, cache_dir=str(cache_dir))
    estimator.fit(dataset, split)

    val = evaluate(estimator, split, part="val")
    test = evaluate(estimator, split, part="test")

    resolved_config = dict(config)
    resolved_config["resolved_noise"] = {
        "noise_std": estimator.resolved_.noise_std,
        "nu_pretrain": estimator.resolved_.nu_pretrain,
        "nu_classifier": estimator.resolved_.nu_classifier,
    }
    _write_json(out_dir / "config.json", resolved_config)
    save_report(estimator.report_, out_dir / "report.json")

    with open(out_dir / "metrics.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for row in estimator.history_:
            if row["stage"] != "classifier":
                continue
            fh.write(
                json.dumps(
                    {
                        "epoch": row["epoch"],
                        "train_loss": row["train_loss"],
                        "val_acc": row["val_acc"],
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")

    _write_json(
        out_dir / "final.json",
        {"test_acc": test["accuracy"], "ci95": 0.0, "seeds": [config["seed"]]},
    )

    if hasattr(estimator, "net_"):
        nn.save_checkpoint(estimator.net_, out_dir / "classifier.gdpw")
    if hasattr(estimator, "head_"):
        nn.save_checkpoint(estimator.head_.encoder, out_dir / "head_encoder.gdpw")
        nn.save_checkpoint(estimator.head_.classifier, out_dir / "head_classifier.gdpw")
    if hasattr(estimator, "emb_weights_"):
        holder = nn.Mlp(weights=[estimator.emb_weights_.W], biases=[estimator.emb_weights_.b])
        nn.save_checkpoint(holder, out_dir / "embedding_weights.gdpw")

    return {
        "test_acc": test["accuracy"],
        "val_acc": val["accuracy"],
        "epsilon": estimator.report_.budget.epsilon,
        "report": report_to_dict(estimator.report_),
    }


def _sweep_cells(config: dict) -> list:
    """Cross-product of sweep values and seeds, in deterministic order."""
    sweep = config.get("sweep") or {}
    values = OrderedDict(sorted((sweep.get("values") or {}).items()))
    seeds = sweep.get("seeds") or [config["seed"]]
    keys = list(values.keys())
    combos = list(itertools.product(*[values[k] for k in keys])) if keys else [()]
    cells = []
    for combo_idx, combo in enumerate(combos):
        for seed in seeds:
            overrides = [f"{k}={json.dumps(v)}" for k, v in zip(keys, combo)]
            overrides.append(f"seed={int(seed)}")
            overrides.append(f"split_seed={int(seed)}")
            cell = apply_overrides(config, overrides)
            cell.pop("sweep", None)
            cells.append((combo_idx, dict(zip(keys, combo)), int(seed), resolve_config(cell)))
    return cells


def _run_cell(args):
    combo_idx, combo, seed, cell_config, cell_dir = args
    summary = run_training(cell_config, cell_dir)
    return {
        "combo_idx": combo_idx,
        "combo": combo,
        "seed": seed,
        "model": cell_config["model"],
        "relation": cell_config["relation"],
        "k": cell_config["k"],
        "epsilon": summary["epsilon"],
        "test_acc": summary["test_acc"],
    }


def run_sweep(config: dict, out_dir, workers: int = 1) -> list:
    """Run every (cell, seed) combination and write results.csv + summary.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = _sweep_cells(config)
    jobs = []
    for combo_idx, combo, seed, cell_config in cells:
        cell_dir = out_dir / f"cell-{combo_idx:03d}-seed-{seed}"
        jobs.append((combo_idx, combo, seed, cell_config, cell_dir))

    if workers > 1:
        with get_context("spawn").Pool(workers) as pool:
            rows = pool.map(_run_cell, jobs)
    else:
        rows = [_run_cell(job) for job in jobs]
    rows.sort(key=lambda row: (row["combo_idx"], row["seed"]))

    with open(out_dir / "results.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "relation", "k", "epsilon", "seed", "test_acc"])
        for row in rows:
            writer.writerow(
                [
                    row["model"],
                    row["relation"],
                    "" if row["k"] is None else row["k"],
                    row["epsilon"],
                    row["seed"],
                    row["test_acc"],
                ]
            )

    summary = []
    for combo_idx in sorted({row["combo_idx"] for row in rows}):
        cell_rows = [r for r in rows if r["combo_idx"] == combo_idx]
        accs = [r["test_acc"] for r in cell_rows]
        mean, half = confidence_interval(accs)
        summary.append(
            {
                "combo": cell_rows[0]["combo"],
                "model": cell_rows[0]["model"],
                "relation": cell_rows[0]["relation"],
                "k": cell_rows[0]["k"],
                "seeds": [r["seed"] for r in cell_rows],
                "mean_test_acc": mean,
                "ci95": half,
            }
        )
    _write_json(out_dir / "summary.json", summary)
    return rows


# --- dataset ingestion and statistics ----------------------------------------------


def ingest_content_cites(content_path, cites_path, directed: bool = False) -> tuple:
    """Parse the classic content/cites citation format.

    The content file holds one node per line: id, feature values, label, all
    whitespace-separated.  The cites file holds one edge per line as two node
    ids.  Undirected ingestion stores each citation as two directed entries;
    self-loops and duplicate pairs are dropped.  Returns (dataset, meta).
    """
    ids, rows, label_names = [], [], []
    with open(content_path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:-1]])
            label_names.append(parts[-1])
    if not ids:
        raise InvalidInputError(f"{content_path} holds no nodes")
    index = {node_id: i for i, node_id in enumerate(ids)}
    if len(index) != len(ids):
        raise InvalidInputError("duplicate node ids in content file")

    classes = sorted(set(label_names))
    class_index = {name: i for i, name in enumerate(classes)}
    n = len(ids)
    features = np.asarray(rows, dtype=np.float64)
    labels = np.zeros((n, len(classes)))
    for i, name in enumerate(label_names):
        labels[i, class_index[name]] = 1.0

    adjacency = np.zeros((n, n), dtype=np.int8)
    skipped = 0
    with open(cites_path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                continue
            a, b = parts
            if a not in index or b not in index:
                skipped += 1
                continue
            i, j = index[a], index[b]
            if i == j:
                continue
            adjacency[j, i] = 1
            if not directed:
                adjacency[i, j] = 1

    dataset = GraphDataset(adjacency=adjacency, features=features, labels=labels)
    meta = {"classes": classes, "skipped_edges": skipped, "directed": directed}
    return dataset, meta


def dataset_stats(dataset: GraphDataset) -> dict:
    return {
        "nodes": dataset.n,
        "edges": dataset.num_edges,
        "features": dataset.num_features,
        "classes": dataset.num_classes,
        "labeled": dataset.m_labeled,
        "edge_density": edge_density(dataset),
        "homophily": homophily(dataset),
    }
