"""Pipeline driver: configuration, commands, artifacts on disk.

Commands: ingest, train-args, train-events, predict, crossval, gradcheck.
Every command reads an optional INI config plus flag overrides, dumps the
resolved effective config next to its outputs, and appends a timestamped
line to a sidecar run log (the only place timestamps live, so reruns with
the same seed are byte-identical elsewhere).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from . import embed, evalkit, gradcheck, ndiff, vecent, vecom
from .corpus import Corpus, corpus_stats, load_corpus_dir, load_schema, write_standoff
from .errors import BioeeError, ConfigurationError, TrainingSetupError
from .evalkit import child_rng
from .vecent import ArgHyper
from .vecom import EventHyper

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class RunConfig:
    schema: str = "bb"
    train_dir: str = ""
    predict_dir: str = ""
    embedding: str = "hashed"  # "hashed" or a path to a word2vec file
    embedding_format: str = "text"
    oov: str = "hashed"
    oov_seed: int = 0
    dim: int = 200
    window: int = 10
    lstm_hidden: int = 128
    arg_mlp_hidden: int = 128
    event_mlp_hidden: int = 64
    batch: int = 32
    epochs: int = 10
    dropout: float = 0.2
    lr: float = 0.01
    momentum: float = 0.9
    oversample_ratio: float = 5.0
    threshold: float = 0.5
    seed: int = 7
    out: str = "out"
    jobs: int = 1
    typed_candidates: bool = False
    doc_level_cv: bool = False


_INI_LAYOUT = {
    "task": ("schema", "train_dir", "predict_dir"),
    "embedding": ("embedding", "embedding_format", "oov", "oov_seed", "dim"),
    "hyper": (
        "window",
        "lstm_hidden",
        "arg_mlp_hidden",
        "event_mlp_hidden",
        "batch",
        "epochs",
        "dropout",
        "lr",
        "momentum",
        "oversample_ratio",
        "threshold",
    ),
    "run": ("seed", "out", "jobs", "typed_candidates", "doc_level_cv"),
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def config_from_ini(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file {path} not found or unreadable")
    known = {key: section for section, keys in _INI_LAYOUT.items() for key in keys}
    for section in parser.sections():
        if section not in _INI_LAYOUT:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if known.get(key) != section:
                raise ConfigurationError(f"unknown config key {key!r} in [{section}]")
            ftype = _FIELD_TYPES[key]
            if ftype in ("bool", bool):
                value = parser.getboolean(section, key)
            elif ftype in ("int", int):
                value = parser.getint(section, key)
            elif ftype in ("float", float):
                value = parser.getfloat(section, key)
            else:
                value = raw
            setattr(cfg, key, value)
    return cfg


def config_to_ini(cfg: RunConfig) -> str:
    lines = []
    for section, keys in _INI_LAYOUT.items():
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {getattr(cfg, key)}")
        lines.append("")
    return "\n".join(lines)


def _arg_hyper(cfg: RunConfig) -> ArgHyper:
    return ArgHyper(
        u=cfg.window,
        lstm_hidden=cfg.lstm_hidden,
        mlp_hidden=cfg.arg_mlp_hidden,
        batch=cfg.batch,
        epochs=cfg.epochs,
        dropout=cfg.dropout,
        lr=cfg.lr,
        momentum=cfg.momentum,
        oversample_ratio=cfg.oversample_ratio,
    )


def _event_hyper(cfg: RunConfig) -> EventHyper:
    return EventHyper(
        hidden=cfg.event_mlp_hidden,
        batch=cfg.batch,
        epochs=cfg.epochs,
        lr=cfg.lr,
        momentum=cfg.momentum,
        oversample_ratio=cfg.oversample_ratio,
    )


# ---------------------------------------------------------------------------
# Shared plumbing


def _resolve_table(cfg: RunConfig) -> embed.EmbeddingTable:
    if cfg.embedding == "hashed":
        return embed.EmbeddingTable(dim=cfg.dim, oov_policy=cfg.oov, seed=cfg.oov_seed)
    return embed.load_table(
        cfg.embedding, format=cfg.embedding_format, oov_policy=cfg.oov, seed=cfg.oov_seed
    )


def _train_corpus(cfg: RunConfig) -> Corpus:
    if not cfg.train_dir:
        raise ConfigurationError("no training corpus directory configured (train_dir)")
    return load_corpus_dir(cfg.train_dir, load_schema(cfg.schema))


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(cfg: RunConfig, command: str, started: float) -> None:
    out = _outdir(cfg)
    (out / "effective.ini").write_text(config_to_ini(cfg), encoding="utf-8")
    stamp = datetime.now().isoformat(timespec="seconds")
    with open(out / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {command} finished in {time.perf_counter() - started:.2f}s\n")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _map_jobs(fn, items, jobs: int) -> list:
    """Run fn over items, optionally on a thread pool; order preserved."""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------------------
# Commands


def cmd_ingest(cfg: RunConfig) -> int:
    started = time.perf_counter()
    corpus = _train_corpus(cfg)
    stats = corpus_stats(corpus)
    out = _outdir(cfg)
    _write_json(out / "stats.json", stats)
    print(json.dumps(stats, indent=2, sort_keys=True))
    _finish(cfg, "ingest", started)
    return 0


def cmd_train_args(cfg: RunConfig) -> int:
    started = time.perf_counter()
    corpus = _train_corpus(cfg)
    table = _resolve_table(cfg)
    hyper = _arg_hyper(cfg)
    out = _outdir(cfg)
    args_dir = out / "args"
    args_dir.mkdir(exist_ok=True)

    windows = vecent.build_entity_windows(corpus, hyper.u, table)

    def train_one(arg_type: str) -> str:
        samples = vecent.build_argument_samples(corpus, arg_type, windows)
        rng = child_rng(cfg.seed, f"cmd/train-args/{arg_type}")
        model, log = vecent.train_argument_model(samples, hyper, rng=rng, arg_type=arg_type)
        vecent.save_argument_model(model, args_dir / f"{arg_type}.ckpt")
        (args_dir / f"{arg_type}.log.csv").write_text(
            vecent.epoch_log_csv(log), encoding="utf-8"
        )
        logger.info("trained argument model %s on %d samples", arg_type, len(samples))
        return arg_type

    trained = _map_jobs(train_one, corpus.task_schema.argument_types, cfg.jobs)
    _write_json(
        args_dir / "manifest.json",
        {
            "task": cfg.schema,
            "argument_types": trained,
            "u": hyper.u,
            "dim": table.dim,
            "lstm_hidden": hyper.lstm_hidden,
            "mlp_hidden": hyper.mlp_hidden,
            "dropout": hyper.dropout,
            "embedding": {
                "source": cfg.embedding,
                "format": cfg.embedding_format,
                "oov": cfg.oov,
                "seed": cfg.oov_seed,
            },
        },
    )
    print(f"trained {len(trained)} argument models -> {args_dir}")
    _finish(cfg, "train-args", started)
    return 0


def _load_argument_models(cfg: RunConfig) -> tuple[dict[str, vecent.ArgumentModel], dict]:
    args_dir = Path(cfg.out) / "args"
    manifest_path = args_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigurationError(f"no argument checkpoints at {args_dir} (run train-args first)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    models = {}
    for arg_type in manifest["argument_types"]:
        ckpt = args_dir / f"{arg_type}.ckpt"
        if not ckpt.exists():
            raise ConfigurationError(f"missing argument checkpoint {ckpt}")
        models[arg_type] = vecent.load_argument_model(
            ckpt, arg_type, dropout=manifest.get("dropout", cfg.dropout)
        )
    return models, manifest


def cmd_train_events(cfg: RunConfig) -> int:
    started = time.perf_counter()
    corpus = _train_corpus(cfg)
    table = _resolve_table(cfg)
    arg_models, manifest = _load_argument_models(cfg)
    if table.dim != manifest["dim"]:
        raise ConfigurationError(
            f"embedding dim {table.dim} does not match checkpoints ({manifest['dim']})"
        )
    hyper = _event_hyper(cfg)
    out = _outdir(cfg)
    events_dir = out / "events"
    events_dir.mkdir(exist_ok=True)

    windows = vecent.build_entity_windows(corpus, manifest["u"], table)

    def train_one(event_type: str):
        src_role, tgt_role = corpus.task_schema.roles(event_type)
        samples = vecom.build_pair_samples(corpus, event_type, arg_models, windows)
        rng = child_rng(cfg.seed, f"cmd/train-events/{event_type}")
        try:
            model, log = vecom.train_event_model(
                samples, event_type, src_role, tgt_role, hyper, rng=rng
            )
        except TrainingSetupError as exc:
            logger.warning("skipping %s: %s", event_type, exc)
            return event_type, str(exc)
        ndiff.save_tensors(
            events_dir / f"{event_type}.ckpt",
            {name: t.data for name, t in model.parameters().items()},
        )
        (events_dir / f"{event_type}.log.csv").write_text(
            vecent.epoch_log_csv(log), encoding="utf-8"
        )
        return event_type, None

    trained, skipped = [], {}
    for event_type, error in _map_jobs(train_one, corpus.task_schema.event_types, cfg.jobs):
        if error is None:
            trained.append(event_type)
        else:
            skipped[event_type] = error
    if not trained:
        raise TrainingSetupError("no event type had both positive and negative pairs")
    _write_json(
        events_dir / "manifest.json",
        {
            "task": cfg.schema,
            "event_types": trained,
            "skipped": skipped,
            "hidden": hyper.hidden,
        },
    )
    print(f"trained {len(trained)} event models -> {events_dir}")
    _finish(cfg, "train-events", started)
    return 0


def _load_event_models(cfg: RunConfig, schema) -> dict[str, vecom.EventModel]:
    events_dir = Path(cfg.out) / "events"
    manifest_path = events_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigurationError(f"no event checkpoints at {events_dir} (run train-events first)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    models = {}
    for event_type in manifest["event_types"]:
        ckpt = events_dir / f"{event_type}.ckpt"
        if not ckpt.exists():
            raise ConfigurationError(f"missing event checkpoint {ckpt}")
        blobs = ndiff.load_tensors(ckpt)
        src_role, tgt_role = schema.roles(event_type)

        def dense(prefix):
            return ndiff.DenseParams(
                A=ndiff.parameter(blobs[f"{prefix}.A"], name=f"{prefix}.A"),
                b=ndiff.parameter(blobs[f"{prefix}.b"], name=f"{prefix}.b"),
            )

        models[event_type] = vecom.EventModel(
            event_type=event_type,
            source_type=src_role,
            target_type=tgt_role,
            exist_f1=dense("exist_f1"),
            exist_f2=dense("exist_f2"),
            dir_f1=dense("dir_f1"),
            dir_f2=dense("dir_f2"),
        )
    return models


def cmd_predict(cfg: RunConfig) -> int:
    started = time.perf_counter()
    if not cfg.predict_dir:
        raise ConfigurationError("no prediction corpus directory configured (predict_dir)")
    schema = load_schema(cfg.schema)
    corpus = load_corpus_dir(cfg.predict_dir, schema)
    table = _resolve_table(cfg)
    arg_models, manifest = _load_argument_models(cfg)
    if table.dim != manifest["dim"]:
        raise ConfigurationError(
            f"embedding dim {table.dim} does not match checkpoints ({manifest['dim']})"
        )
    event_models = _load_event_models(cfg, schema)
    out = _outdir(cfg)
    pred_dir = out / "pred"
    pred_dir.mkdir(exist_ok=True)

    windows = vecent.build_entity_windows(corpus, manifest["u"], table)
    tsv_rows = ["sentence_id\tfirst\tsecond\tp_exists\tp_forward\tevent_type"]
    for doc in corpus.documents:
        # Embed each involved entity once per role model.
        emb_cache: dict[tuple[str, str], np.ndarray] = {}

        def embeddings(role: str, qids: list[str]) -> np.ndarray:
            missing = [q for q in qids if (role, q) not in emb_cache]
            if missing:
                vecs = vecent.argument_embeddings(
                    arg_models[role], [windows[q] for q in missing]
                )
                for q, v in zip(missing, vecs):
                    emb_cache[(role, q)] = v
            return np.stack([emb_cache[(role, q)] for q in qids])

        doc_events = []
        for sidx, sent in enumerate(doc.sentences):
            ents = corpus.sentence_entities(doc.id, sidx)
            if len(ents) < 2:
                continue
            all_pairs = vecom.gen_candidates(sent, ents)
            for event_type in sorted(event_models):
                model = event_models[event_type]
                pairs = (
                    vecom.typed_filter(all_pairs, schema, event_type)
                    if cfg.typed_candidates
                    else all_pairs
                )
                if not pairs:
                    continue
                src_role, tgt_role = schema.roles(event_type)
                if src_role not in arg_models or tgt_role not in arg_models:
                    raise ConfigurationError(
                        f"event type {event_type} needs argument models "
                        f"{src_role} and {tgt_role}"
                    )
                qa = [Corpus.qualify(doc.id, p.first.id) for p in pairs]
                qb = [Corpus.qualify(doc.id, p.second.id) for p in pairs]
                uniq = sorted(set(qa) | set(qb))
                emb_s = embeddings(src_role, uniq)
                emb_t = embeddings(tgt_role, uniq)
                row = {q: i for i, q in enumerate(uniq)}
                first_halves = np.concatenate([emb_s, emb_t], axis=1)
                second_halves = np.concatenate([emb_t, emb_s], axis=1)
                composed = first_halves[[row[q] for q in qa]] - second_halves[
                    [row[q] for q in qb]
                ]
                pe, pf = vecom.event_forward_batch(model, composed)
                predictions = list(zip(pe.tolist(), pf.tolist()))
                for pair, (e_prob, f_prob) in zip(pairs, predictions):
                    tsv_rows.append(
                        f"{sent.id}\t{pair.first.id}\t{pair.second.id}"
                        f"\t{e_prob:.6f}\t{f_prob:.6f}\t{event_type}"
                    )
                doc_events.extend(
                    vecom.decode_events(pairs, predictions, event_type, cfg.threshold)
                )
        (pred_dir / f"{doc.id}.a2").write_text(
            write_standoff(doc_events, schema), encoding="utf-8"
        )
    (pred_dir / "pairs.tsv").write_text("\n".join(tsv_rows) + "\n", encoding="utf-8")
    print(f"wrote predictions for {len(corpus.documents)} documents -> {pred_dir}")
    _finish(cfg, "predict", started)
    return 0


def cmd_crossval(cfg: RunConfig) -> int:
    started = time.perf_counter()
    corpus = _train_corpus(cfg)
    table = _resolve_table(cfg)
    report = evalkit.cross_validate(
        corpus,
        table,
        arg_hyper=_arg_hyper(cfg),
        event_hyper=_event_hyper(cfg),
        threshold=cfg.threshold,
        seed=cfg.seed,
        doc_level=cfg.doc_level_cv,
        jobs=cfg.jobs,
    )
    out = _outdir(cfg)
    cv_dir = out / "crossval"
    curves_dir = cv_dir / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cv_dir / "metrics.json", evalkit.report_json(report))
    (cv_dir / "metrics.csv").write_text(evalkit.metrics_csv(report), encoding="utf-8")
    (cv_dir / "timings.csv").write_text(evalkit.timings_csv(report), encoding="utf-8")
    for name, result in sorted(report.arguments.items()):
        (curves_dir / f"arg_{name}_roc.tsv").write_text(
            evalkit.curve_tsv(result.curves.roc), encoding="utf-8"
        )
        (curves_dir / f"arg_{name}_prc.tsv").write_text(
            evalkit.curve_tsv(result.curves.prc), encoding="utf-8"
        )
    for name, result in sorted(report.events.items()):
        (curves_dir / f"event_{name}_roc.tsv").write_text(
            evalkit.curve_tsv(result.curves.roc), encoding="utf-8"
        )
        (curves_dir / f"event_{name}_prc.tsv").write_text(
            evalkit.curve_tsv(result.curves.prc), encoding="utf-8"
        )
    if report.micro_arguments:
        (curves_dir / "micro_arguments_roc.tsv").write_text(
            evalkit.curve_tsv(report.micro_arguments.roc), encoding="utf-8"
        )
        (curves_dir / "micro_arguments_prc.tsv").write_text(
            evalkit.curve_tsv(report.micro_arguments.prc), encoding="utf-8"
        )
    if report.micro_events:
        (curves_dir / "micro_events_roc.tsv").write_text(
            evalkit.curve_tsv(report.micro_events.roc), encoding="utf-8"
        )
        (curves_dir / "micro_events_prc.tsv").write_text(
            evalkit.curve_tsv(report.micro_events.prc), encoding="utf-8"
        )
    print((cv_dir / "metrics.csv").read_text(encoding="utf-8"))
    _finish(cfg, "crossval", started)
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    results = gradcheck.run_suite()
    worst = 0.0
    for name in sorted(results):
        err = results[name]
        worst = max(worst, err)
        status = "ok" if err <= 1e-4 else "FAIL"
        print(f"{status:4s} {name:28s} max_rel_err={err:.3e}")
    print(f"worst {worst:.3e} (tolerance 1e-04)")
    return 0 if worst <= 1e-4 else 1


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file; flags override it")
    parser.add_argument("--schema", help="builtin task name (bb, bgi) or schema JSON path")
    parser.add_argument("--train-dir", dest="train_dir")
    parser.add_argument("--predict-dir", dest="predict_dir")
    parser.add_argument("--embedding", help="'hashed' or a word2vec file path")
    parser.add_argument("--embedding-format", dest="embedding_format", choices=["text", "binary"])
    parser.add_argument("--oov", choices=[embed.OOV_ZERO, embed.OOV_HASHED])
    parser.add_argument("--oov-seed", dest="oov_seed", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--window", type=int)
    parser.add_argument("--lstm-hidden", dest="lstm_hidden", type=int)
    parser.add_argument("--arg-mlp-hidden", dest="arg_mlp_hidden", type=int)
    parser.add_argument("--event-mlp-hidden", dest="event_mlp_hidden", type=int)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--dropout", type=float)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--momentum", type=float)
    parser.add_argument("--oversample-ratio", dest="oversample_ratio", type=float)
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out")
    parser.add_argument("--jobs", type=int)
    parser.add_argument(
        "--typed-candidates", dest="typed_candidates", action=argparse.BooleanOptionalAction
    )
    parser.add_argument(
        "--doc-level-cv", dest="doc_level_cv", action=argparse.BooleanOptionalAction
    )
    parser.add_argument("--verbose", action="store_true")


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = config_from_ini(args.config, cfg)
    for field in dataclasses.fields(RunConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            setattr(cfg, field.name, value)
    return cfg


_COMMANDS = {
    "ingest": cmd_ingest,
    "train-args": cmd_train_args,
    "train-events": cmd_train_events,
    "predict": cmd_predict,
    "crossval": cmd_crossval,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bioee",
        description="Trigger-free bottom-up biomedical event extraction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        _add_common(sub.add_parser(name))
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    cfg = _build_config(args)
    try:
        return _COMMANDS[args.command](cfg)
    except BioeeError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("file", "line"):
            if getattr(exc, attr, None) is not None:
                payload[attr] = getattr(exc, attr)
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
