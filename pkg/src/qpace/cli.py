"""Reproducible experiment driver.

Subcommands: ``generate`` (datasets), ``train`` (strategy comparison),
``dla`` (Lie-basis cache), ``scan`` (phase-cut classification sweep),
``verify-props`` (proposition reports), ``report`` (aggregated CSVs and
figures).  Exit codes: 0 success, 1 config error, 2 numerical failure,
3 I/O or artifact failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import qcnn
from .config import CutSpec, ExperimentConfig, default_config_text, load_config
from .curriculum import PacingFn, Strategy, default_pacing, preset
from .dla import generator_fingerprint, lie_closure, load_basis, matchgate_generators, save_basis
from .errors import ArtifactError, ConfigError, NumericsError, QpaceError
from .models import Dataset, generate_dataset, load_dataset, save_dataset
from .persist import atomic_write_bytes, atomic_write_text
from .training import RunMetrics, TrainConfig, aggregate, train_reference_model, train_run

log = logging.getLogger("qpace")

METRICS_SCHEMA = "qpace-metrics v1"
SCAN_SCHEMA = "qpace-scan v1"


# ---------------------------------------------------------------------------
# Seed derivations (documented; all artifacts record the derived values)


def train_seed_for_run(dataset_seed: int, run: int) -> int:
    return dataset_seed + 1 + run


def run_seed_for_run(base_seed: int, run: int) -> int:
    return base_seed + run


# ---------------------------------------------------------------------------
# Dataset cache


def dataset_prefix(cfg: ExperimentConfig, role: str, seed: int, count: int) -> Path:
    tag = f"{cfg.model.family}_n{cfg.model.n}_{role}_seed{seed}_N{count}"
    return Path(cfg.cache_dir) / "datasets" / tag


def ensure_dataset(cfg: ExperimentConfig, role: str, seed: int, count: int) -> Dataset:
    prefix = dataset_prefix(cfg, role, seed, count)
    if prefix.with_suffix(".json").exists() and prefix.with_suffix(".npy").exists():
        log.info("dataset cache hit: %s", prefix)
        return load_dataset(prefix)
    ds = generate_dataset(cfg.model, count, seed, balanced=cfg.balanced, role=role)
    save_dataset(ds, prefix)
    log.info("generated %s dataset (%d examples) -> %s", role, count, prefix)
    return ds


def cmd_generate(cfg: ExperimentConfig) -> int:
    ensure_dataset(cfg, "test", cfg.dataset_seed, cfg.test_size)
    for r in range(cfg.runs):
        ensure_dataset(cfg, "train", train_seed_for_run(cfg.dataset_seed, r), cfg.train_size)
    return 0


# ---------------------------------------------------------------------------
# Strategy/config plumbing


def build_strategy(cfg: ExperimentConfig, name: str) -> Strategy:
    strat = preset(name, cfg.family, train_size=cfg.train_size,
                   minibatch=cfg.minibatch, epochs=cfg.epochs)
    if strat.pacing.kind not in ("full", "constant"):
        p0 = cfg.start_fraction if cfg.start_fraction is not None else min(
            1.0, cfg.minibatch / cfg.train_size)
        pacing = PacingFn(cfg.pacing, p0=p0,
                          t_sat=max(1.0, cfg.saturation_fraction * cfg.epochs))
        strat = replace(strat, pacing=pacing)
    return strat


def train_config_for_run(cfg: ExperimentConfig, name: str, run: int) -> TrainConfig:
    return TrainConfig(
        model=cfg.model,
        strategy=build_strategy(cfg, name),
        train_size=cfg.train_size,
        test_size=cfg.test_size,
        train_dataset_seed=train_seed_for_run(cfg.dataset_seed, run),
        test_dataset_seed=cfg.dataset_seed,
        run_seed=run_seed_for_run(cfg.seed, run),
        epochs=cfg.epochs,
        steps_per_epoch=cfg.steps_per_epoch,
        minibatch=cfg.minibatch,
        learning_rate=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        epsilon=cfg.epsilon,
        variant=cfg.variant,
        self_taught_reference=cfg.self_taught_reference,
    )


# ---------------------------------------------------------------------------
# Metrics serialization


def metrics_csv_text(cfg: ExperimentConfig, name: str, run: int, tc: TrainConfig,
                     metrics: RunMetrics) -> str:
    lines = [
        f"# {METRICS_SCHEMA} config={cfg.config_hash()} experiment={cfg.name} "
        f"strategy={name} run={run} train_seed={tc.train_dataset_seed} "
        f"run_seed={tc.run_seed}",
        "epoch,train_accuracy,test_accuracy,train_risk,available_size,"
        "minibatch_indices,scores",
    ]
    for e in metrics.epochs:
        batches = "|".join(" ".join(str(i) for i in b) for b in e.minibatches)
        scores = " ".join(f"{s:.8g}" for s in e.scores)
        lines.append(
            f"{e.epoch},{e.train_accuracy!r},{e.test_accuracy!r},{e.train_risk!r},"
            f"{e.available_size},{batches},{scores}")
    return "\n".join(lines) + "\n"


def read_metrics_csv(path: Path) -> Dict:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(f"# {METRICS_SCHEMA}"):
        raise ArtifactError(f"{path} is not a {METRICS_SCHEMA} file")
    meta = dict(kv.split("=", 1) for kv in lines[0][2:].split()[2:])
    rows = []
    for line in lines[2:]:
        if not line.strip():
            continue
        parts = line.split(",")
        rows.append({
            "epoch": int(parts[0]),
            "train_accuracy": float(parts[1]),
            "test_accuracy": float(parts[2]),
            "train_risk": float(parts[3]),
            "available_size": int(parts[4]),
        })
    return {"meta": meta, "rows": rows}


def _train_one(payload) -> Tuple[str, int, RunMetrics]:
    cfg, name, run, train_ds, test_ds, reference, basis = payload
    tc = train_config_for_run(cfg, name, run)
    metrics = train_run(tc, train_ds=train_ds, test_ds=test_ds,
                        reference_params=reference, basis=basis)
    return name, run, metrics


def cmd_train(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config_resolved.json",
                      json.dumps({"hash": cfg.config_hash(), "config": cfg.raw}, indent=1))
    test_ds = ensure_dataset(cfg, "test", cfg.dataset_seed, cfg.test_size)
    trains = [ensure_dataset(cfg, "train", train_seed_for_run(cfg.dataset_seed, r),
                             cfg.train_size) for r in range(cfg.runs)]

    basis = None
    if cfg.family == "physics":
        basis = ensure_basis(cfg)

    needs_reference = any(
        build_strategy(cfg, s).scorer.kind == "self_taught" for s in cfg.strategies)
    references: List[Optional[np.ndarray]] = [None] * cfg.runs
    if needs_reference:
        for r in range(cfg.runs):
            tc = train_config_for_run(cfg, cfg.strategies[0], r)
            references[r] = train_reference_model(tc, trains[r], test_ds)
            log.info("reference model for run %d trained", r)

    jobs = []
    for name in cfg.strategies:
        needs_ref = build_strategy(cfg, name).scorer.kind == "self_taught"
        for r in range(cfg.runs):
            jobs.append((cfg, name, r, trains[r], test_ds,
                         references[r] if needs_ref else None, basis))

    if cfg.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]

    by_strategy: Dict[str, List[RunMetrics]] = {s: [None] * cfg.runs for s in cfg.strategies}
    for name, run, metrics in results:
        by_strategy[name][run] = metrics
        tc = train_config_for_run(cfg, name, run)
        atomic_write_text(out / f"metrics_{name}_run{run:02d}.csv",
                          metrics_csv_text(cfg, name, run, tc, metrics))
        import io
        buf = io.BytesIO()
        np.savez(buf, theta=metrics.final_params, theta_best=metrics.params_at_best_test,
                 variant=np.array(cfg.variant), config_hash=np.array(cfg.config_hash()))
        atomic_write_bytes(out / f"params_{name}_run{run:02d}.npz", buf.getvalue())

    table = {}
    for name in cfg.strategies:
        agg = aggregate(by_strategy[name])
        summary = {
            "config": cfg.config_hash(),
            "experiment": cfg.name,
            "strategy": name,
            "runs": cfg.runs,
            "reference_seeds": (
                [int(np.random.SeedSequence(
                    entropy=run_seed_for_run(cfg.seed, r), spawn_key=(97,)).generate_state(1)[0])
                 for r in range(cfg.runs)]
                if build_strategy(cfg, name).scorer.kind == "self_taught" else None),
            "per_run": [
                {"run": r,
                 "run_seed": run_seed_for_run(cfg.seed, r),
                 "train_seed": train_seed_for_run(cfg.dataset_seed, r),
                 "best_test_accuracy": m.best_test_accuracy,
                 "best_test_epoch": m.best_test_epoch,
                 "best_train_accuracy": m.best_train_accuracy,
                 "best_train_epoch": m.best_train_epoch}
                for r, m in enumerate(by_strategy[name])],
            "mean_best_train_accuracy": agg.mean_best_train_accuracy,
            "mean_best_test_accuracy": agg.mean_best_test_accuracy,
            "sem_best_test_accuracy": agg.sem_best_test_accuracy,
        }
        atomic_write_text(out / f"summary_{name}.json", json.dumps(summary, indent=1))
        table[name] = {
            "train_best_mean": agg.mean_best_train_accuracy,
            "test_best_mean": agg.mean_best_test_accuracy,
            "test_best_sem": agg.sem_best_test_accuracy,
        }
    atomic_write_text(out / "summary.json", json.dumps(
        {"config": cfg.config_hash(), "experiment": cfg.name, "family": cfg.family,
         "runs": cfg.runs, "strategies": table}, indent=1))
    log.info("wrote %s", out / "summary.json")
    return 0


# ---------------------------------------------------------------------------
# Lie basis cache


def basis_cache_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.cache_dir) / f"basis_matchgate_n{cfg.model.n}.txt"


def ensure_basis(cfg: ExperimentConfig):
    gens = matchgate_generators(cfg.model.n)
    path = basis_cache_path(cfg)
    if path.exists():
        basis = load_basis(path, expected_generators=gens)
        log.info("basis cache hit: %s (dim %d)", path, basis.dim)
        return basis
    basis = lie_closure(gens)
    save_basis(basis, path)
    log.info("computed Lie closure: dim %d -> %s", basis.dim, path)
    return basis


def cmd_dla(cfg: ExperimentConfig) -> int:
    basis = ensure_basis(cfg)
    gens = matchgate_generators(cfg.model.n)
    gram = basis.gram_matrix()
    residual = float(np.max(np.abs(gram - np.eye(basis.dim))))
    report = {
        "config": cfg.config_hash(),
        "n": cfg.model.n,
        "dim": basis.dim,
        "generator_fingerprint": basis.generator_fingerprint,
        "generators": [repr(g) for g in gens],
        "orthonormality_residual": residual,
        "cache_file": str(basis_cache_path(cfg)),
    }
    out = Path(cfg.out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "dla_report.json", json.dumps(report, indent=1))
    log.info("DLA dim %d, orthonormality residual %.3g", basis.dim, residual)
    return 0


# ---------------------------------------------------------------------------
# Phase-cut scan


def scan_rows(cfg: ExperimentConfig, theta: np.ndarray, cut: CutSpec) -> List[Dict]:
    from .states import ground_state_with_gap

    arch = qcnn.build_qcnn(cfg.variant)
    m = cfg.model.num_classes
    rows = []
    for value in cut.values():
        couplings = dict(cut.fixed)
        couplings[cut.sweep] = value
        if cfg.model.family == "xxz":
            couplings.setdefault("delta", cfg.model.fixed.get("delta", 3.0))
        h = cfg.model.hamiltonian(couplings)
        _, psi, _ = ground_state_with_gap(h)
        probs = qcnn.forward(arch, theta, psi).probs
        predicted = int(np.argmax(probs[:m]))
        rows.append({
            "value": value,
            "true_phase": cfg.model.label(couplings),
            "probs": [float(p) for p in probs[:m]],
            "predicted": predicted,
        })
    return rows


def scan_csv_text(cfg: ExperimentConfig, cut: CutSpec, rows: List[Dict]) -> str:
    m = cfg.model.num_classes
    header = [f"# {SCAN_SCHEMA} config={cfg.config_hash()} model={cfg.model.family} "
              f"sweep={cut.sweep} fixed={json.dumps(cut.fixed, sort_keys=True)}",
              ",".join([cut.sweep, "true_phase"] + [f"p{j}" for j in range(m)]
                       + ["predicted_phase"])]
    for row in rows:
        header.append(",".join(
            [repr(row["value"]), str(row["true_phase"])]
            + [repr(p) for p in row["probs"]] + [str(row["predicted"])]))
    return "\n".join(header) + "\n"


def load_params(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"no parameter file at {path}")
    with np.load(path, allow_pickle=False) as data:
        return data["theta"]


def cmd_scan(cfg: ExperimentConfig, params_path: str | Path) -> int:
    theta = load_params(params_path)
    rows = scan_rows(cfg, theta, cfg.cut)
    out = Path(cfg.out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    dest = out / f"scan_{cfg.cut.sweep}.csv"
    atomic_write_text(dest, scan_csv_text(cfg, cfg.cut, rows))
    log.info("wrote %s (%d points)", dest, len(rows))
    return 0


# ---------------------------------------------------------------------------
# Proposition verification


def cmd_verify_props(cfg: ExperimentConfig) -> int:
    from .curriculum import ScoreContext, Scorer
    from .verify import estimate_G, prop1_check, prop2_toy_check

    out = Path(cfg.out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    train_ds = ensure_dataset(cfg, "train", train_seed_for_run(cfg.dataset_seed, 0),
                              cfg.train_size)
    basis = ensure_basis(cfg)
    arch = qcnn.build_qcnn("matchgate")
    profile = estimate_G(train_ds, Scorer("physics_pg"), arch, cfg.model.num_classes,
                         param_samples=cfg.param_samples, bins=cfg.bins,
                         seed=cfg.seed, context=ScoreContext(basis=basis))
    report1 = prop1_check(profile, list(cfg.fractions))
    payload1 = report1.to_dict()
    payload1["config"] = cfg.config_hash()
    payload1["scorer"] = "physics_pg (matchgate circuit)"
    payload1["param_samples"] = cfg.param_samples
    atomic_write_text(out / "prop1_report.json", json.dumps(payload1, indent=1))

    report2 = prop2_toy_check(train_ds, seeds=cfg.prop2_seeds, epochs=cfg.prop2_epochs)
    payload2 = report2.to_dict()
    payload2["config"] = cfg.config_hash()
    atomic_write_text(out / "prop2_report.json", json.dumps(payload2, indent=1))
    log.info("prop1 hypothesis non-increasing: %s; prop2 premise holds: %s, ordering: %s",
             report1.hypothesis_nonincreasing, report2.premise_holds_all,
             report2.ordering_holds)
    return 0


def cmd_report(cfg: ExperimentConfig) -> int:
    from .report import write_report

    write_report(Path(cfg.out_dir) / cfg.name, cfg)
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpace",
        description="Curriculum-paced QCNN phase-classification experiments")
    parser.add_argument("--print-config", action="store_true",
                        help="print the fully-enumerated default config and exit")
    sub = parser.add_subparsers(dest="command")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="experiment config file")
    common.add_argument("--seed", type=int, default=None, help="override training seed")
    common.add_argument("--jobs", type=int, default=None, help="parallel (strategy x run) jobs")
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--cache", type=str, default=None, help="cache directory")
    common.add_argument("--test-size", type=int, default=None, help="override test-set size")
    sub.add_parser("generate", parents=[common], help="generate and cache datasets")
    sub.add_parser("train", parents=[common], help="run the strategy comparison")
    sub.add_parser("dla", parents=[common], help="compute or load the Lie-algebra basis")
    scan = sub.add_parser("scan", parents=[common], help="classify along a phase-diagram cut")
    scan.add_argument("--params", type=str, required=True, help="trained parameter file (.npz)")
    sub.add_parser("verify-props", parents=[common], help="run both proposition checks")
    sub.add_parser("report", parents=[common], help="aggregate metrics into CSVs and figures")
    return parser


def _overrides_from_args(args) -> Dict[str, str]:
    overrides = {}
    if args.seed is not None:
        overrides["training.seed"] = str(args.seed)
    if args.jobs is not None:
        overrides["output.jobs"] = str(args.jobs)
    if args.out is not None:
        overrides["output.out_dir"] = args.out
    if args.cache is not None:
        overrides["output.cache_dir"] = args.cache
    if args.test_size is not None:
        overrides["data.test_size"] = str(args.test_size)
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        print(default_config_text(), end="")
        return 0
    if not args.command:
        parser.print_help()
        return 1
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "dla":
            return cmd_dla(cfg)
        if args.command == "scan":
            return cmd_scan(cfg, args.params)
        if args.command == "verify-props":
            return cmd_verify_props(cfg)
        if args.command == "report":
            return cmd_report(cfg)
        parser.print_help()
        return 1
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 1
    except NumericsError as exc:
        log.error("numerical failure: %s", exc)
        return 2
    except (ArtifactError, OSError) as exc:
        log.error("I/O or artifact failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
