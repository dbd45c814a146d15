"""Command-line pipeline: synthesize, train, score, cluster, evaluate, export.

Subcommands: ``synth``, ``train``, ``cluster``, ``compare``, ``heatmap``.
Options can come from a JSON config file (``--config``); explicit flags win.
Exit codes: 0 success, 2 usage/validation error, 3 runtime failure. The
``GSSF_LOG`` environment variable (error/info/debug) controls stderr logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import synthgen
from .cluster import (Assignment, ClusteringError, complete_linkage,
                      euclidean_distance_matrix, gssf_distance_matrix, kmeans,
                      save_assignment_csv)
from .ink import InkError, load_jsonl, save_jsonl
from .metrics import MetricsError, adjusted_rand_index, evaluate, normalized_mutual_info
from .sbr import (SbRMatrix, build_sbr_matrix, load_csv, normalize_unit_interval,
                  save_csv, save_pgm)
from .seq2seq import (ArchConfig, CheckpointError, ModelError, TrainConfig,
                      TrainingError, VocabularyError, checkpoint_bytes,
                      load_checkpoint, save_checkpoint, train)
from .similarity import (GSSF_FAMILY, SimilarityKind, UnscorableAnswer,
                         cross_score_matrix, score_answers)
from .synthgen import SynthesisError

log = logging.getLogger("gssf")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

KIND_ALIASES = {
    "gssf": SimilarityKind.GSSF,
    "asym": SimilarityKind.ASYMMETRIC,
    "min": SimilarityKind.MIN,
    "max": SimilarityKind.MAX,
    "edit": SimilarityKind.NEG_EDIT_DISTANCE,
}
METHODS = ("m3", "m4", "m5")
M3_KINDS = {SimilarityKind.GSSF, SimilarityKind.MIN, SimilarityKind.MAX}

CONFIG_KEYS = {"kind", "method", "k", "seed", "threads", "restarts", "normalization",
               "num_seeds", "arch", "train"}
TRAIN_KEYS = {"learning_rate", "clip_norm", "batch_size", "max_epochs", "patience",
              "val_fraction"}


class UsageError(ValueError):
    pass


class RuntimeFailure(RuntimeError):
    pass


# -- configuration ----------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise UsageError(f"config {path}: expected a JSON object")
    unknown = set(obj) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
    return obj


def _pick(flag_value, config: dict, key: str, default):
    return flag_value if flag_value is not None else config.get(key, default)


def _arch_config(config: dict) -> ArchConfig:
    try:
        arch = ArchConfig(**config.get("arch", {}))
        arch.validate()
        return arch
    except (TypeError, ModelError) as exc:
        raise UsageError(f"bad architecture config: {exc}") from exc


def _train_config(config: dict) -> TrainConfig:
    section = config.get("train", {})
    unknown = set(section) - TRAIN_KEYS
    if unknown:
        raise UsageError(f"unknown training config keys {sorted(unknown)}")
    try:
        return TrainConfig(arch=_arch_config(config), **section)
    except TypeError as exc:
        raise UsageError(f"bad training config: {exc}") from exc


def _parse_kind(name: str) -> SimilarityKind:
    key = name.strip().lower()
    if key in KIND_ALIASES:
        return KIND_ALIASES[key]
    try:
        return SimilarityKind(key)
    except ValueError:
        raise UsageError(f"unknown similarity kind {name!r} "
                         f"(choose from {sorted(KIND_ALIASES)})") from None


def _check_compatibility(method: str, kind: SimilarityKind) -> None:
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r} (choose from {METHODS})")
    if method == "m3" and kind not in M3_KINDS:
        raise UsageError(f"method m3 clusters |score| distances and needs a symmetric "
                         f"score family kind, not {kind.value!r}")


def _resolve_k(policy, categories: list[str | None], n: int) -> int:
    if policy in (None, "categories"):
        if any(c is None for c in categories):
            raise UsageError("k policy 'categories' needs a category on every sample")
        return len(set(categories))
    try:
        k = int(policy)
    except (TypeError, ValueError):
        raise UsageError(f"k must be an integer or 'categories', got {policy!r}") from None
    if not 1 <= k <= n:
        raise UsageError(f"k={k} out of range for {n} answers")
    return k


def _threads(value) -> int:
    if value is None:
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise UsageError("--threads must be at least 1")
    return n


# -- pipeline pieces --------------------------------------------------------


def _cluster_once(method: str, raw: SbRMatrix, norm: SbRMatrix, k: int, seed: int,
                  restarts: int) -> Assignment:
    if method == "m5":
        return kmeans(norm.values, k, seed=seed, restarts=restarts)
    if method == "m4":
        return complete_linkage(euclidean_distance_matrix(norm.values), k)
    return complete_linkage(gssf_distance_matrix(raw), k)


def _evaluation_block(labels: list[int], categories: list[str | None],
                      extra_indices: bool) -> dict:
    if any(c is None for c in categories):
        return {"purity": None, "mc": None, "j": None, "per_cluster": None}
    ev = evaluate(labels, categories)
    block = {
        "purity": ev.purity,
        "mc": ev.mc,
        "j": ev.j,
        "per_cluster": [
            {"size": r.size, "majority_category": r.majority_category,
             "majority_size": r.majority_size}
            for r in ev.per_cluster
        ],
    }
    if extra_indices:
        block["nmi"] = normalized_mutual_info(labels, categories)
        block["ari"] = adjusted_rand_index(labels, categories)
    return block


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _validate_report(path: Path) -> None:
    obj = json.loads(path.read_text(encoding="utf-8"))
    required = {"purity", "mc", "k", "h", "j", "per_cluster", "similarity_kind",
                "method", "seeds", "normalization"}
    missing = required - set(obj)
    if missing:
        raise RuntimeFailure(f"{path}: report missing keys {sorted(missing)}")
    if obj["purity"] is not None and not 0.0 < obj["purity"] <= 1.0:
        raise RuntimeFailure(f"{path}: purity {obj['purity']} outside (0, 1]")


def _validate_csv(path: Path, expected_rows: int) -> None:
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) != expected_rows + 1:
        raise RuntimeFailure(f"{path}: expected {expected_rows} data rows")


def _validate_pgm(path: Path, n: int) -> None:
    data = path.read_bytes()
    header = f"P5\n{n} {n}\n255\n".encode("ascii")
    if not data.startswith(header) or len(data) != len(header) + n * n:
        raise RuntimeFailure(f"{path}: malformed heatmap")


# -- subcommands ------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = synthgen.load_spec(args.spec)
    if args.seed is not None:
        spec = synthgen.AnswerSetSpec(categories=spec.categories, jitter=spec.jitter,
                                      spacing=spec.spacing, seed=args.seed)
    inks = synthgen.generate_answer_set(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_jsonl(out, inks)
    written = load_jsonl(out)
    expected = sum(c.count for c in spec.categories)
    if len(written) != expected:
        raise RuntimeFailure(f"{out}: wrote {len(written)} samples, expected {expected}")
    log.info("synthesized %d samples into %s", len(written), out)
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args.config)
    inks = load_jsonl(args.data)
    if any(ink.label is None for ink in inks):
        raise UsageError("training data must carry a label on every sample")
    seed = int(_pick(args.seed, config, "seed", 0))
    tconf = _train_config(config)

    def on_epoch(record: dict) -> None:
        print(json.dumps(record, sort_keys=True), flush=True)

    params = train([(ink, list(ink.label)) for ink in inks], tconf, seed, on_epoch=on_epoch)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, params)
    if checkpoint_bytes(load_checkpoint(out)) != out.read_bytes():
        raise RuntimeFailure(f"{out}: checkpoint did not round-trip")
    log.info("checkpoint written to %s", out)
    return EXIT_OK


def _score_stage(args, config: dict):
    inks = load_jsonl(args.data)
    params = load_checkpoint(args.ckpt)
    threads = _threads(_pick(args.threads, config, "threads", None))
    t0 = time.perf_counter()
    answers = score_answers(params, inks, threads=threads)
    score_s = time.perf_counter() - t0
    categories = [ink.category for ink in inks]
    return inks, params, answers, categories, threads, score_s


def cmd_cluster(args) -> int:
    config = _load_config(args.config)
    kind = _parse_kind(_pick(args.kind, config, "kind", "gssf"))
    method = str(_pick(args.method, config, "method", "m5"))
    _check_compatibility(method, kind)
    normalization = str(_pick(args.normalization, config, "normalization", "global"))
    seed = int(_pick(args.seed, config, "seed", 0))
    restarts = int(_pick(args.restarts, config, "restarts", 10))

    inks, params, answers, categories, threads, score_s = _score_stage(args, config)
    k = _resolve_k(_pick(args.k, config, "k", "categories"), categories, len(inks))

    t0 = time.perf_counter()
    raw = build_sbr_matrix(answers, kind, params, threads=threads)
    norm = normalize_unit_interval(raw, mode=normalization)
    sbr_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    assignment = _cluster_once(method, raw, norm, k, seed, restarts)
    cluster_s = time.perf_counter() - t0

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "k": assignment.k,
        "h": len(inks),
        "objective": assignment.objective,
        "similarity_kind": kind.value,
        "method": method,
        "seeds": {"clustering": seed, "restarts": restarts},
        "normalization": normalization,
        "num_unscorable": sum(1 for a in answers if not a.scorable),
        "degenerate_matrix": norm.degenerate,
    }
    report.update(_evaluation_block(assignment.labels, categories, args.extra_indices))
    _write_json(out_dir / "report.json", report)
    save_assignment_csv(out_dir / "assignment.csv", assignment,
                        [ink.id for ink in inks], categories)
    save_csv(out_dir / "sbr.csv", raw)
    save_pgm(out_dir / "sbr.pgm", norm)
    # Wall times live outside report.json so repeat runs stay byte-identical.
    _write_json(out_dir / "timings.json",
                {"score_s": score_s, "sbr_s": sbr_s, "cluster_s": cluster_s,
                 "threads": threads})
    _validate_report(out_dir / "report.json")
    _validate_csv(out_dir / "assignment.csv", len(inks))
    _validate_csv(out_dir / "sbr.csv", len(inks))
    _validate_pgm(out_dir / "sbr.pgm", len(inks))
    log.info("clustered %d answers into %d clusters (purity=%s)", len(inks),
             assignment.k, report.get("purity"))
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _load_config(args.config)
    kinds = [_parse_kind(s) for s in (args.kinds.split(",") if args.kinds
                                      else list(KIND_ALIASES))]
    methods = args.methods.split(",") if args.methods else ["m5"]
    for method in methods:
        if method not in METHODS:
            raise UsageError(f"unknown method {method!r} (choose from {METHODS})")
    normalization = str(_pick(args.normalization, config, "normalization", "global"))
    base_seed = int(_pick(args.seed, config, "seed", 0))
    restarts = int(_pick(args.restarts, config, "restarts", 10))
    num_seeds = int(_pick(args.num_seeds, config, "num_seeds", 3))
    if num_seeds < 1:
        raise UsageError("--num-seeds must be at least 1")

    # Sweep only the compatible cells; m3 over a non-symmetric kind is skipped.
    cells = []
    for kind in kinds:
        for method in methods:
            try:
                _check_compatibility(method, kind)
            except UsageError as exc:
                log.warning("skipping %s/%s: %s", kind.value, method, exc)
                continue
            cells.append((kind, method))
    if not cells:
        raise UsageError("no compatible kind/method combinations to compare")

    inks, params, answers, categories, threads, _ = _score_stage(args, config)
    if any(c is None for c in categories):
        raise UsageError("compare needs a category on every sample")
    k = _resolve_k(_pick(args.k, config, "k", "categories"), categories, len(inks))

    # One cross-score pass feeds every F-family kind.
    f_shared = (cross_score_matrix(answers, params, threads=threads)
                if any(kind in GSSF_FAMILY for kind, _ in cells) else None)
    rows = []
    matrices: dict[SimilarityKind, tuple[SbRMatrix, SbRMatrix]] = {}
    for kind, method in cells:
        if kind not in matrices:
            f = f_shared if kind in GSSF_FAMILY else None
            raw = build_sbr_matrix(answers, kind, params, threads=threads, f=f)
            matrices[kind] = (raw, normalize_unit_interval(raw, mode=normalization))
        raw, norm = matrices[kind]
        for i in range(num_seeds):
            assignment = _cluster_once(method, raw, norm, k, base_seed + i, restarts)
            ev = evaluate(assignment.labels, categories)
            rows.append({"kind": kind.value, "method": method, "seed": base_seed + i,
                         "purity": ev.purity, "mc": ev.mc})
    summary = []
    for kind, method in cells:
        cell = [r for r in rows if r["kind"] == kind.value and r["method"] == method]
        purities = np.array([r["purity"] for r in cell])
        mcs = np.array([r["mc"] for r in cell])
        summary.append({
            "kind": kind.value, "method": method,
            "purity_mean": float(purities.mean()), "purity_sd": float(purities.std()),
            "mc_mean": float(mcs.mean()), "mc_sd": float(mcs.std()),
        })
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "compare.json",
                {"k": k, "h": len(inks), "num_seeds": num_seeds, "rows": rows,
                 "summary": summary})
    lines = ["kind,method,seed,purity,mc"]
    lines += [f"{r['kind']},{r['method']},{r['seed']},{r['purity']!r},{r['mc']!r}"
              for r in rows]
    (out_dir / "compare.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _validate_csv(out_dir / "compare.csv", len(rows))
    log.info("compared %d kind/method/seed cells", len(rows))
    return EXIT_OK


def cmd_heatmap(args) -> int:
    ids, values = load_csv(args.matrix)
    matrix = SbRMatrix(values=values, ids=ids, kind=SimilarityKind.GSSF)
    norm = normalize_unit_interval(matrix)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_pgm(out, norm)
    _validate_pgm(out, len(ids))
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gssf",
        description="Cluster handwritten answer trajectories by recognizer-based "
                    "sequence similarity.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic answer set")
    p.add_argument("--spec", required=True, help="answer-set spec JSON")
    p.add_argument("--out", required=True, help="output dataset (JSON Lines)")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", help="train the recognizer")
    p.add_argument("--data", required=True, help="labelled dataset (JSON Lines)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_train)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", required=True, help="dataset (JSON Lines)")
    common.add_argument("--ckpt", required=True, help="trained checkpoint")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--k", help="cluster count or 'categories'")
    common.add_argument("--normalization", choices=("global", "per_row"))
    common.add_argument("--restarts", type=int)

    p = sub.add_parser("cluster", parents=[common], help="score, cluster and evaluate")
    p.add_argument("--kind", help="similarity kind: gssf|asym|min|max|edit")
    p.add_argument("--method", help="clustering method: m3|m4|m5")
    p.add_argument("--extra-indices", action="store_true",
                   help="add NMI/ARI to the report")
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("compare", parents=[common],
                       help="sweep similarity kinds and methods")
    p.add_argument("--kinds", help="comma list of kinds (default: all)")
    p.add_argument("--methods", help="comma list of methods (default: m5)")
    p.add_argument("--num-seeds", type=int, dest="num_seeds")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("heatmap", help="render a matrix CSV as a PGM heatmap")
    p.add_argument("--matrix", required=True, help="similarity matrix CSV")
    p.add_argument("--out", required=True, help="output PGM path")
    p.set_defaults(handler=cmd_heatmap)
    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("GSSF_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(stream=sys.stderr, level=levels.get(level_name, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (UnscorableAnswer, TrainingError, RuntimeFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, InkError, SynthesisError, CheckpointError, ClusteringError,
            MetricsError, ModelError, VocabularyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
