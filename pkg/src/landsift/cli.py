"""Command line entry points for the restriction mining pipeline.

Each subcommand reads and writes artifacts of a project directory, so a
full run is a sequence of invocations sharing one --project argument.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from . import active_learning as al
from . import bootstrap, classifier, geograph, metrics, ocr_ingest, synth, textprep
from .classifier import FeaturePool, ModelSnapshot, TrainConfig
from .fileio import atomic_write_json
from .labels import (
    DEFAULT_SCHEMA,
    RESTRICTIONS,
    TOPICS,
    AnnotationRecord,
    LabelSet,
    SchemaError,
    load_keyword_table,
)
from .project import Project, ProjectError

log = logging.getLogger("landsift")

_SPACES = (RESTRICTIONS, TOPICS)

# errors that are user-facing rather than bugs
_CLI_ERRORS = (
    ProjectError,
    SchemaError,
    ocr_ingest.IngestError,
    bootstrap.BootstrapError,
    synth.SynthError,
    classifier.ClassifierError,
    al.ALError,
    geograph.GeoError,
    metrics.MetricError,
    FileNotFoundError,
)


def _train_config(args: argparse.Namespace) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "lr_scale", None) is not None:
        cfg = dataclasses.replace(cfg, lr_scale=args.lr_scale)
    if getattr(args, "epochs", None) is not None:
        cfg = dataclasses.replace(cfg, max_epochs=args.epochs)
    return cfg


def _split_matrices(dataset, splits, space, pool):
    """(x, y) per split part, labels projected onto one space."""
    by_id = {d.sentence_id: d for d in dataset}

    def part(name: str):
        ids = splits.part(name)
        x = pool.rows(ids)
        y = np.array([by_id[i].labels.vector(space) for i in ids], dtype=float)
        return x, y

    return part


# ---------------------------------------------------------------------------
# Corpus preparation commands


def cmd_ingest(args: argparse.Namespace) -> int:
    project = Project(args.project).ensure()
    pages, _scores, stats, metas = ocr_ingest.ingest_corpus(
        args.words, args.meta, args.threshold
    )
    ocr_ingest.write_pages(pages, project.pages_file)
    if metas:
        with open(project.meta_file, "w", encoding="utf-8") as fh:
            for doc_id in sorted(metas):
                m = metas[doc_id]
                obj = {
                    "doc_id": m.doc_id,
                    "title": m.title,
                    "region": m.region,
                    "area_ids": list(m.area_ids),
                }
                fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
    print(json.dumps(stats.to_json(), indent=2, sort_keys=True))
    print(f"wrote {len(pages)} accepted pages to {project.pages_file}")
    return 0


def cmd_textprep(args: argparse.Namespace) -> int:
    project = Project(args.project)
    sentences = textprep.process_pages(project.pages())
    textprep.write_sentences(sentences, project.sentences_file)
    reasons: dict[str, int] = {}
    for s in sentences:
        if not s.valid:
            reasons[s.reject_reason] = reasons.get(s.reject_reason, 0) + 1
    valid = sum(1 for s in sentences if s.valid)
    print(f"{len(sentences)} sentences, {valid} valid, {len(sentences) - valid} rejected")
    for reason in sorted(reasons):
        print(f"  {reason}: {reasons[reason]}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    project = Project(args.project).ensure()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = synth.SynthConfig.from_json(json.load(fh))
    else:
        cfg = synth.SynthConfig()
    if args.sentences is not None:
        cfg.n_sentences = args.sentences
    if args.seed is not None:
        cfg.rng_seed = args.seed
    if args.signal is not None:
        cfg.signal = args.signal
    if args.noise is not None:
        cfg.noise = args.noise
    if args.areas is not None:
        cfg.n_areas = args.areas
    cfg.validate()
    artifacts = synth.build_corpus_artifacts(cfg)
    paths = synth.write_artifacts(artifacts, project.root)
    n_docs = len({p.doc_id for p in artifacts.pages})
    print(
        f"{cfg.n_sentences} sentences over {len(artifacts.pages)} pages "
        f"in {n_docs} documents, {cfg.n_areas} areas"
    )
    for name in sorted(paths):
        print(f"  {name}: {paths[name]}")
    return 0


def cmd_bootstrap(args: argparse.Namespace) -> int:
    project = Project(args.project)
    table = load_keyword_table(args.keywords) if args.keywords else None
    kwargs = {"table": table} if table else {}
    pool, stats = bootstrap.build_candidate_pool(
        project.sentences(),
        target_size=args.size,
        rng_seed=args.seed,
        **kwargs,
    )
    textprep.write_sentences(pool, project.pool_file)
    print(json.dumps(stats.to_json(), indent=2, sort_keys=True))
    print(f"wrote {len(pool)} pool sentences to {project.pool_file}")
    return 0


def cmd_annotate(args: argparse.Namespace) -> int:
    """Label the pool from gold, optionally as several noisy annotators."""
    project = Project(args.project)
    pool_sentences = project.pool()
    gold = synth.join_gold(pool_sentences, project.gold())
    k = len(DEFAULT_SCHEMA.restrictions)

    records: list[AnnotationRecord] = []
    for s in pool_sentences:
        base = list(gold[s.sentence_id].combined)
        for a in range(args.annotators):
            bits = list(base)
            if args.flip > 0.0:
                # flips keyed by (seed, annotator, sentence) so reruns agree
                rng = np.random.default_rng(
                    [args.seed, a, zlib.crc32(s.sentence_id.encode())]
                )
                flips = rng.random(len(bits)) < args.flip
                bits = [int(b ^ f) for b, f in zip(bits, flips)]
            labels = LabelSet(tuple(bits[:k]), tuple(bits[k:]))
            records.append(AnnotationRecord(s.sentence_id, f"ann-{a}", labels))

    bootstrap.write_annotations(records, project.annotations_file)
    merged = bootstrap.merge_annotations(records)
    dataset = [
        bootstrap.LabeledSentence(s.sentence_id, s.text, merged[s.sentence_id])
        for s in pool_sentences
    ]
    bootstrap.write_dataset(dataset, project.dataset_file)
    n_labeled = sum(1 for d in dataset if not d.labels.is_empty())
    print(
        f"{len(records)} annotations by {args.annotators} annotator(s), "
        f"{n_labeled}/{len(dataset)} sentences labeled after merge"
    )

    if args.annotators >= 2:
        votes: dict[str, list[list[int]]] = {}
        for r in records:
            votes.setdefault(r.sentence_id, []).append(list(r.labels.combined))
        print(f"{'label':<16}{'alpha':>8}{'kappa':>8}")
        for j, name in enumerate(DEFAULT_SCHEMA.all_labels):
            matrix = [[ann[j] for ann in votes[s.sentence_id]] for s in pool_sentences]
            cells = []
            for fn in (metrics.krippendorff_alpha, metrics.fleiss_kappa):
                try:
                    cells.append(f"{fn(matrix):8.3f}")
                except metrics.MetricError:
                    cells.append(f"{'n/a':>8}")
            print(f"{name:<16}{cells[0]}{cells[1]}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    project = Project(args.project)
    dataset = project.dataset()
    ratios = tuple(int(r) for r in args.ratios.split(","))
    split = bootstrap.stratified_split(dataset, ratios, args.seed)
    project.ensure().save_splits(split)
    sizes = {name: len(split.part(name)) for name in bootstrap.SPLIT_NAMES}
    print(f"split sizes: {sizes}")

    by_id = {d.sentence_id: d for d in dataset}
    totals = np.array([d.labels.combined for d in dataset]).sum(axis=0)
    print(f"{'label':<16}" + "".join(f"{n:>12}" for n in bootstrap.SPLIT_NAMES))
    for j, name in enumerate(DEFAULT_SCHEMA.all_labels):
        row = f"{name:<16}"
        for part in bootstrap.SPLIT_NAMES:
            ids = split.part(part)
            count = sum(by_id[i].labels.combined[j] for i in ids)
            frac = count / len(ids) if ids else 0.0
            row += f"{count:>6} {frac:>5.1%}"
        global_frac = totals[j] / len(dataset)
        print(row + f"   (global {global_frac:.1%})")
    return 0


# ---------------------------------------------------------------------------
# Training and the active learning loop


def cmd_train_baseline(args: argparse.Namespace) -> int:
    project = Project(args.project)
    dataset = project.dataset()
    splits = project.splits()
    pool = FeaturePool.build({d.sentence_id: d.text for d in dataset})
    cfg = _train_config(args)
    spaces = _SPACES if args.space == "both" else (args.space,)
    project.ensure()
    for space in spaces:
        part = _split_matrices(dataset, splits, space, pool)
        x, y = part("train")
        validation = part("validation")
        model = classifier.train(classifier.cold_snapshot(space), (x, y), validation, cfg)
        path = model.save(project.model_file(space))
        pred = (classifier.predict(model, validation[0]) >= 0.5).astype(int)
        report = metrics.prf1(validation[1].astype(int), pred, model.labels)
        print(
            f"{space}: {x.shape[0]} train rows, best epoch "
            f"{model.provenance['best_epoch']}/{model.provenance['epochs_run']}, "
            f"val macro-F1 {report.macro_f1:.3f} -> {path}"
        )
    return 0


def _al_context(project: Project, space: str):
    """Feature pool plus validation/test matrices for the loop."""
    dataset = project.dataset()
    splits = project.splits()
    valid = project.valid_sentences()
    texts = {s.sentence_id: s.text for s in valid}
    for d in dataset:
        texts.setdefault(d.sentence_id, d.text)
    pool = FeaturePool.build(texts)
    part = _split_matrices(dataset, splits, space, pool)
    return dataset, splits, valid, pool, part("validation"), part("test")


def _interactive_annotator(space: str, texts: dict[str, str]) -> al.Annotator:
    labels = DEFAULT_SCHEMA.space(space)
    menu = ", ".join(f"{i}={name}" for i, name in enumerate(labels))

    def annotate(batch):
        out = {}
        for item in batch:
            print(f"\n[{item.sentence_id}] {texts.get(item.sentence_id, '<no text>')}")
            raw = input(f"labels ({menu}; blank for none): ").strip()
            bits = [0] * len(labels)
            for tok in raw.replace(",", " ").split():
                if tok.isdigit() and int(tok) < len(labels):
                    bits[int(tok)] = 1
                elif tok in labels:
                    bits[labels.index(tok)] = 1
                else:
                    print(f"  ignoring {tok!r}")
            out[item.sentence_id] = tuple(bits)
        return out

    return annotate


def _make_annotator(args, project: Project, valid, space: str) -> al.Annotator:
    if args.annotator == "oracle":
        gold = synth.join_gold(valid, project.gold())
        return al.oracle_annotator(gold, space, args.flip, args.seed)
    return _interactive_annotator(space, {s.sentence_id: s.text for s in valid})


def _finish_loop(project: Project, state: al.ALState, config: al.ALConfig) -> None:
    project.save_al_state(state, config)
    project.al_history_file(state.label_space).write_text(
        al.history_json(state), encoding="utf-8"
    )
    line = f"{state.label_space}: {state.iteration} iterations, {len(state.labeled)} labeled"
    if state.history and "test" in state.history[-1]:
        line += f", test macro-F1 {state.history[-1]['test']['macro_f1']:.3f}"
    print(line)
    print(f"state: {project.al_state_file(state.label_space)}")


def cmd_al_run(args: argparse.Namespace) -> int:
    project = Project(args.project)
    space = args.space
    dataset, splits, valid, pool, validation, test = _al_context(project, space)

    model_path = project.model_file(space)
    if not model_path.exists():
        raise ProjectError(f"{model_path} missing; run `train-baseline` first")
    model = ModelSnapshot.load(model_path)
    if model.label_space != space:
        raise ProjectError(f"{model_path} is a {model.label_space} model, not {space}")

    by_id = {d.sentence_id: d for d in dataset}
    labeled = {i: by_id[i].labels.vector(space) for i in splits.train}
    dataset_ids = {d.sentence_id for d in dataset}
    unlabeled = {s.sentence_id for s in valid} - dataset_ids

    config = al.ALConfig(
        label_space=space,
        batch_size=args.batch,
        iterations=args.iterations,
        subsample_size=args.subsample,
        rng_seed=args.seed,
        train=_train_config(args),
    )
    state = al.ALState(space, labeled=labeled, unlabeled=unlabeled, model=model)
    annotator = _make_annotator(args, project, valid, space)
    project.ensure()
    al.run_loop(
        state,
        config,
        annotator,
        pool,
        validation,
        test,
        checkpoint=lambda st: project.save_al_state(st, config),
    )
    _finish_loop(project, state, config)
    return 0


def cmd_al_resume(args: argparse.Namespace) -> int:
    project = Project(args.project)
    state, config = project.al_state(args.space)
    if args.iterations is not None:
        config = dataclasses.replace(config, iterations=args.iterations)
    _dataset, _splits, valid, pool, validation, test = _al_context(project, args.space)
    annotator = _make_annotator(args, project, valid, args.space)
    al.run_loop(
        state,
        config,
        annotator,
        pool,
        validation,
        test,
        checkpoint=lambda st: project.save_al_state(st, config),
    )
    _finish_loop(project, state, config)
    return 0


# ---------------------------------------------------------------------------
# Evaluation, graph and serving


def cmd_eval(args: argparse.Namespace) -> int:
    project = Project(args.project)
    baseline = ModelSnapshot.load(args.baseline)
    challengers = [ModelSnapshot.load(p) for p in args.challenger]
    space = baseline.label_space
    for m in challengers:
        if m.label_space != space:
            raise ProjectError(
                f"challenger space {m.label_space!r} does not match baseline {space!r}"
            )

    dataset = project.dataset()
    splits = project.splits()
    by_id = {d.sentence_id: d for d in dataset}
    ids = splits.test
    texts = [by_id[i].text for i in ids]
    y = np.array([by_id[i].labels.vector(space) for i in ids], dtype=int)
    x = classifier.to_csr([classifier.featurize(t, baseline.dim) for t in texts], baseline.dim)

    labels = list(baseline.labels)
    pred_base = (classifier.predict(baseline, x) >= 0.5).astype(int)
    base_report = metrics.prf1(y, pred_base, labels)
    ch_reports = []
    mc_results = []
    for m in challengers:
        pred = (classifier.predict(m, x) >= 0.5).astype(int)
        ch_reports.append(metrics.prf1(y, pred, labels))
        mc_results.append(
            {
                name: metrics.mcnemar(y[:, j], pred_base[:, j], pred[:, j], name)
                for j, name in enumerate(labels)
            }
        )
    names = [Path(p).stem[:8] for p in args.challenger]
    comp = metrics.EvalComparison(labels, space, base_report, ch_reports, names, mc_results)
    print(metrics.render_comparison_table([comp]))
    if args.out:
        atomic_write_json(metrics.comparison_to_json([comp]), args.out)
        print(f"wrote {args.out}")
    return 0


def _graph_model(project: Project, space: str, override: str | None) -> ModelSnapshot:
    # prefer the loop's latest model, fall back to the seed baseline
    if override:
        return ModelSnapshot.load(override)
    for path in (project.al_model_file(space), project.model_file(space)):
        if path.exists():
            return ModelSnapshot.load(path)
    raise ProjectError(f"no {space} model found; run `train-baseline` or `al run` first")


def cmd_graph_build(args: argparse.Namespace) -> int:
    project = Project(args.project)
    metas = project.metas()
    areas = project.areas()
    r_model = _graph_model(project, RESTRICTIONS, args.restrictions_model)
    t_model = _graph_model(project, TOPICS, args.topics_model)

    valid = project.valid_sentences()
    pool = FeaturePool.build({s.sentence_id: s.text for s in valid})
    probs_r = classifier.predict(r_model, pool.matrix)
    probs_t = classifier.predict(t_model, pool.matrix)

    sent_by_id = {s.sentence_id: s for s in valid}
    classified: list[geograph.ClassifiedSentence] = []
    skipped_meta = 0
    for i, sid in enumerate(pool.ids):
        rbits = classifier.decide(probs_r[i], args.threshold)
        if not any(rbits):
            continue
        s = sent_by_id[sid]
        if s.doc_id not in metas:
            skipped_meta += 1
            continue
        tbits = classifier.decide(probs_t[i], args.threshold)
        topics = tuple(n for n, b in zip(t_model.labels, tbits) if b)
        for j, bit in enumerate(rbits):
            if bit:
                classified.append(
                    geograph.ClassifiedSentence(
                        sentence_id=sid,
                        doc_id=s.doc_id,
                        restriction_type=r_model.labels[j],
                        topics=topics,
                        confidence=float(probs_r[i][j]),
                        text=s.text,
                    )
                )
    if skipped_meta:
        log.warning("%d restriction sentences in documents without metadata", skipped_meta)

    docs = sorted(metas.values(), key=lambda m: m.doc_id)
    graph = geograph.build_graph(docs, areas, classified)
    geograph.save_graph(graph, project.graph_file)
    for warning in graph.warnings:
        log.warning("%s", warning)
    print(
        f"graph: {len(graph.nodes)} nodes, {len(graph.restriction_edges)} restriction "
        f"edges, {len(graph.area_doc_edges)} area links -> {project.graph_file}"
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    project = Project(args.project)
    graph = project.graph()
    payload = graph.area(args.area).payload
    out = {
        "area_id": args.area,
        "category": payload["category"],
        "documents": graph.docs_of_area(args.area),
        "restrictions": geograph.restrictions_by_area(graph, args.area),
    }
    if args.weather:
        out["weather_bands"] = geograph.weather_overlay(
            graph, args.area, project.isobands()
        )
    print(json.dumps(out, indent=2, ensure_ascii=False, sort_keys=True))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import build_app

    app = build_app(Project(args.project))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="landsift",
        description="Mine usage restrictions from OCR document corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--project", default=".", metavar="DIR", help="project directory")

    train_common = argparse.ArgumentParser(add_help=False)
    train_common.add_argument("--lr-scale", type=float, default=None, help="learning rate multiplier")
    train_common.add_argument("--epochs", type=int, default=None, help="max training epochs")

    p = sub.add_parser("ingest", parents=[common], help="score and filter OCR output")
    p.add_argument("--words", required=True, help="word confidence TSV")
    p.add_argument("--meta", default=None, help="document metadata JSONL")
    p.add_argument("--threshold", type=float, default=ocr_ingest.DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("textprep", parents=[common], help="normalize and segment pages")
    p.set_defaults(func=cmd_textprep)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--config", default=None, help="synth config JSON")
    p.add_argument("--sentences", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--signal", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--areas", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bootstrap", parents=[common], help="select the annotation pool")
    p.add_argument("--keywords", default=None, help="keyword table JSON")
    p.add_argument("--size", type=int, default=bootstrap.POOL_TARGET_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("annotate", parents=[common], help="label the pool from gold")
    p.add_argument("--annotators", type=int, default=1)
    p.add_argument("--flip", type=float, default=0.0, help="per-label flip probability")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("split", parents=[common], help="stratified train/val/test split")
    p.add_argument("--ratios", default="1,1,2")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser(
        "train-baseline", parents=[common, train_common], help="train seed models"
    )
    p.add_argument("--space", choices=(*_SPACES, "both"), default="both")
    p.set_defaults(func=cmd_train_baseline)

    p_al = sub.add_parser("al", help="active learning loop")
    al_sub = p_al.add_subparsers(dest="al_command", required=True)

    p = al_sub.add_parser("run", parents=[common, train_common], help="start a loop")
    p.add_argument("--space", choices=_SPACES, required=True)
    p.add_argument("--iterations", type=int, default=al.ITERATIONS)
    p.add_argument("--batch", type=int, default=al.BATCH_SIZE)
    p.add_argument("--subsample", type=int, default=al.SUBSAMPLE_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--annotator", choices=("oracle", "interactive"), default="oracle")
    p.add_argument("--flip", type=float, default=0.0, help="oracle label noise")
    p.set_defaults(func=cmd_al_run)

    p = al_sub.add_parser("resume", parents=[common], help="continue a saved loop")
    p.add_argument("--space", choices=_SPACES, required=True)
    p.add_argument("--iterations", type=int, default=None, help="new iteration budget")
    p.add_argument("--annotator", choices=("oracle", "interactive"), default="oracle")
    p.add_argument("--flip", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_al_resume)

    p = sub.add_parser("eval", parents=[common], help="compare models on the test split")
    p.add_argument("--baseline", required=True, help="baseline model file")
    p.add_argument(
        "--challenger", action="append", default=[], help="challenger model file (repeatable)"
    )
    p.add_argument("--out", default=None, help="write comparison JSON here")
    p.set_defaults(func=cmd_eval)

    p_graph = sub.add_parser("graph", help="restriction graph")
    graph_sub = p_graph.add_subparsers(dest="graph_command", required=True)
    p = graph_sub.add_parser("build", parents=[common], help="classify and assemble")
    p.add_argument("--restrictions-model", default=None)
    p.add_argument("--topics-model", default=None)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_graph_build)

    p = sub.add_parser("report", parents=[common], help="print one area's restrictions")
    p.add_argument("--area", required=True)
    p.add_argument("--weather", action="store_true", help="include weather overlay")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _CLI_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
