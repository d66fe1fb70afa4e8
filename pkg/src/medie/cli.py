"""Command-line interface.

Every subcommand accepts ``--scheme``, ``--seed``, ``--jobs``, ``--config`` and
``--strict``. Option values resolve in this order: command line, then
``MEDIE_<OPTION>`` environment variables (e.g. ``MEDIE_SEED=3``,
``MEDIE_LEARNING_RATE=0.02``), then the ``--config`` YAML/JSON file, then
built-in defaults.

Exit status is 0 on success, 1 when input fails validation (strict mode, a
malformed annotation file, or a diverging training run) and 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from . import __version__
from . import bio, crf, evaluation, pipeline, sampling, span, synth
from .checkpoint import CheckpointError
from .corpus import Corpus, read_corpus, write_corpus
from .features import FeatureConfig, segment
from .optim import TrainConfig, TrainingError
from .scheme import SchemeError, resolve_scheme
from .standoff import StandoffError, serialize_standoff
from .validate import validate

log = logging.getLogger("medie")

ENV_PREFIX = "MEDIE_"
MANIFEST_NAME = "run_manifest.json"


class UsageError(Exception):
    """Bad flags, missing inputs or malformed configuration (exit 2)."""


# -- small helpers -------------------------------------------------------------

def _atomic_write(path: Path, data: str | bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        with open(tmp, "w", encoding="utf-8", newline="") as f:
            f.write(data)
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def _parallel_map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map over worker processes (in-process when jobs <= 1)."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _load_corpus(path, scheme) -> Corpus:
    path = Path(path)
    if not path.is_dir():
        raise UsageError(f"corpus directory {path} does not exist")
    return read_corpus(path, scheme)


def _docs(corpus: Corpus, split: str | None):
    if not split:
        return list(corpus.docs)
    docs = corpus.subset(split)
    if not docs:
        raise UsageError(f"corpus has no documents in split {split!r}")
    return docs


def _feature_config(args) -> FeatureConfig:
    return FeatureConfig(window=args.feature_window, hash_dim=2 ** args.hash_bits,
                         bigrams=not args.no_bigrams, char_classes=not args.no_char_classes)


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.learning_rate, batch_size=args.batch_size,
                       max_epochs=args.max_epochs, grad_clip_l2=args.grad_clip,
                       l2_penalty=args.l2_penalty, patience=args.patience, seed=args.seed)


def _print_table(rows: list[list]):
    if not rows:
        return
    rows = [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())


# -- _Extractor is module-level so worker processes can unpickle it -----------

class _Extractor:
    def __init__(self, bundle):
        self.bundle = bundle

    def __call__(self, doc):
        return pipeline.extract(self.bundle, doc)


class _Preannotator:
    def __init__(self, bundle, drop_rate, seed):
        self.bundle, self.drop_rate, self.seed = bundle, drop_rate, seed

    def __call__(self, item):
        i, doc = item
        rng = np.random.default_rng([self.seed, i])
        return pipeline.drop_entities(pipeline.extract(self.bundle, doc), self.drop_rate, rng)


class _CurveTrainer:
    def __init__(self, entity_config, span_config, feature_config, scheme, alpha, window):
        self.entity_config = entity_config
        self.span_config = span_config
        self.feature_config = feature_config
        self.scheme = scheme
        self.alpha = alpha
        self.window = window

    def __call__(self, train, dev, seed):
        return pipeline.train_pipeline(
            train, dev, self.entity_config.replace(seed=seed), self.span_config.replace(seed=seed),
            self.feature_config, self.scheme, alpha=self.alpha, window=self.window)


# -- subcommands ----------------------------------------------------------------

def cmd_validate(args, scheme) -> tuple[list[Path], int]:
    corpus = _load_corpus(args.corpus, scheme)
    rows, records = [], []
    for ann in sorted(corpus.docs, key=lambda a: a.doc.doc_id):
        for v in validate(ann, scheme):
            rows.append([ann.doc.doc_id, v.kind, v.subject, v.message])
            records.append(v.to_record(ann.doc.doc_id))
    if rows:
        _print_table([["doc_id", "kind", "subject", "message"]] + rows)
    print(f"{len(corpus.docs)} documents, {len(records)} violations")
    outputs = []
    if args.report:
        _atomic_write(Path(args.report), evaluation.dumps_records(records))
        outputs.append(Path(args.report))
    return outputs, 1 if (args.strict and records) else 0


def cmd_convert(args, scheme):
    corpus = _load_corpus(args.input, scheme)
    out = Path(args.output)
    if args.to == "corpus":
        write_corpus(corpus, out, scheme)
    else:
        out.mkdir(parents=True, exist_ok=True)
        for ann in corpus.docs:
            _atomic_write(out / f"{ann.doc.doc_id}.txt", ann.doc.text)
            _atomic_write(out / f"{ann.doc.doc_id}.ann", serialize_standoff(ann, scheme))
    print(f"converted {len(corpus.docs)} documents to {out}")
    return [out], 0


def cmd_encode(args, scheme):
    corpus = _load_corpus(args.corpus, scheme)
    seqs = []
    for ann in sorted(_docs(corpus, args.split), key=lambda a: a.doc.doc_id):
        tags = bio.encode(ann.entities, len(ann.doc.text))
        spans = [(e.start, e.end) for e in ann.entities]
        for lo, hi in segment(ann.doc.text, spans, args.max_len):
            seqs.append((ann.doc.text[lo:hi], tags[lo:hi]))
    _atomic_write(Path(args.output), bio.write_columns(seqs))
    print(f"wrote {len(seqs)} tag sequences to {args.output}")
    return [Path(args.output)], 0


def cmd_generate(args, scheme):
    overrides = {"seed": args.seed}
    if args.records is not None:
        overrides["n_records"] = args.records
    try:
        config = synth.load_generator_config(args.generator, **overrides)
        corpus = synth.generate(config, scheme)
    except (ValueError, KeyError, yaml.YAMLError) as exc:
        raise UsageError(f"generator configuration: {exc}") from None
    write_corpus(corpus, args.output, scheme)
    print(f"generated {len(corpus.record_ids)} records, {len(corpus.docs)} documents in {args.output}")
    return [Path(args.output)], 0


def cmd_sample(args, scheme):
    if args.records:
        rows = []
        with open(args.records, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if line.strip():
                    try:
                        rows.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        raise UsageError(f"{args.records}:{line_no}: {exc}") from None
    elif args.corpus:
        rows = synth.record_conditions(_load_corpus(args.corpus, scheme))
    else:
        raise UsageError("sample needs --records FILE or --corpus DIR")
    config = sampling.SamplingConfig(quota=args.quota, cap=args.cap, seed=args.seed)
    chosen = sampling.stratified_sample(rows, config)
    _atomic_write(Path(args.output), "".join(r + "\n" for r in chosen))
    print(f"selected {len(chosen)} of {len(rows)} records")
    return [Path(args.output)], 0


def cmd_split(args, scheme):
    corpus = _load_corpus(args.corpus, scheme)
    try:
        parts = sampling.split(corpus.record_ids, counts=args.counts, ratios=args.ratios, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    splits = {}
    for name, ids in zip(("train", "dev", "test"), parts):
        for r in ids:
            splits[r] = name
    kept = [a for a in corpus.docs if a.doc.record_id in splits]
    write_corpus(Corpus(kept, splits), args.output, scheme)
    _print_table([["split", "records", "documents"]] + [
        [name, str(len(ids)), str(sum(1 for a in kept if splits[a.doc.record_id] == name))]
        for name, ids in zip(("train", "dev", "test"), parts)])
    return [Path(args.output)], 0


def _train_dev(args, scheme):
    corpus = _load_corpus(args.corpus, scheme)
    return _docs(corpus, args.train_split), _docs(corpus, args.dev_split)


def cmd_train_entity(args, scheme):
    train, dev = _train_dev(args, scheme)
    model = crf.train(train, dev, _train_config(args), _feature_config(args), scheme)
    pipeline.save_crf(model, args.output)
    best = max(r["dev_f1"] for r in model.history)
    print(f"entity model: {len(model.history)} epochs, best dev F1 {best:.4f} -> {args.output}")
    return [Path(args.output)], 0


def cmd_train_span(args, scheme):
    train, dev = _train_dev(args, scheme)
    attr, rel = span.train_span_models(train, dev, _train_config(args), _feature_config(args), scheme,
                                       alpha=args.alpha, window=args.candidate_window)
    pipeline.save_span(attr, rel, args.output)
    print(f"attribute model best dev F1 {max(r['dev_f1'] for r in attr.history):.4f}; "
          f"relation model best dev F1 {max(r['dev_f1'] for r in rel.history):.4f} -> {args.output}")
    return [Path(args.output)], 0


def _bundle(args, scheme):
    for p in args.models:
        if not Path(p).is_file():
            raise UsageError(f"model checkpoint {p} does not exist")
    bundle = pipeline.load_bundle(*args.models, scheme=scheme)
    if args.alpha is not None:
        bundle.attr.alpha = args.alpha
    if args.candidate_window is not None:
        bundle.rel.window = args.candidate_window
    return bundle


def cmd_extract(args, scheme):
    bundle = _bundle(args, scheme)
    corpus = _load_corpus(args.corpus, scheme)
    docs = sorted(_docs(corpus, args.split), key=lambda a: a.doc.doc_id)
    preds = _parallel_map(_Extractor(bundle), [a.doc for a in docs], args.jobs)
    write_corpus(Corpus(preds, {r: s for r, s in corpus.splits.items()}), args.output, scheme)
    print(f"extracted {sum(len(p.entities) for p in preds)} entities from {len(preds)} documents")
    return [Path(args.output)], 0


def cmd_preannotate(args, scheme):
    if not 0 <= args.drop_rate <= 1:
        raise UsageError("--drop-rate must lie in [0, 1]")
    bundle = _bundle(args, scheme)
    corpus = _load_corpus(args.corpus, scheme)
    docs = sorted(_docs(corpus, args.split), key=lambda a: a.doc.doc_id)
    preds = _parallel_map(_Preannotator(bundle, args.drop_rate, args.seed),
                          list(enumerate(a.doc for a in docs)), args.jobs)
    write_corpus(Corpus(preds, dict(corpus.splits)), args.output, scheme)
    print(f"pre-annotated {len(preds)} documents, kept {sum(len(p.entities) for p in preds)} entities")
    return [Path(args.output)], 0


def _paired(gold: Corpus, pred: Corpus, split: str | None):
    g = {a.doc.doc_id: a for a in _docs(gold, split)}
    p = {a.doc.doc_id: a for a in pred.docs}
    missing = sorted(set(g) - set(p))
    if missing:
        raise UsageError(f"prediction lacks documents {missing[:5]}")
    ids = sorted(g)
    return [g[i] for i in ids], [p[i] for i in ids]


def _emit_reports(args, reports):
    print(evaluation.format_reports(reports, per_type=args.per_type))
    outputs = []
    if args.report:
        rows = [r for rep in reports.values() for r in rep.to_records()]
        _atomic_write(Path(args.report), evaluation.dumps_records(rows))
        outputs.append(Path(args.report))
    return outputs


def cmd_score(args, scheme):
    gold, pred = _paired(_load_corpus(args.gold, scheme), _load_corpus(args.pred, scheme), args.split)
    tasks = evaluation.TASKS if args.task == "all" else (args.task,)
    reports = {t: evaluation.score_task(gold, pred, t) for t in tasks}
    outputs = _emit_reports(args, reports)
    for t, rep in reports.items():
        print(f"{t}: {rep.summary_line()}")
    return outputs, 0


def cmd_iaa(args, scheme):
    a, b = _load_corpus(args.a, scheme), _load_corpus(args.b, scheme)
    try:
        reports = evaluation.iaa(a.docs, b.docs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    outputs = _emit_reports(args, reports)
    for t, rep in reports.items():
        print(f"{t}: F1={rep.f1:.4f}")
    return outputs, 0


def cmd_learning_curve(args, scheme):
    corpus = _load_corpus(args.corpus, scheme)
    pool, dev, test = (_docs(corpus, s) for s in (args.train_split, args.dev_split, args.test_split))
    seeds = [args.seed + i for i in range(args.n_seeds)]
    trainer = _CurveTrainer(_train_config(args), _train_config(args), _feature_config(args), scheme,
                            args.alpha, args.candidate_window)
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as ex:
                points, raw = evaluation.learning_curve(pool, dev, test, args.fractions, seeds, trainer,
                                                        progress=log.info, map_fn=ex.map)
        else:
            points, raw = evaluation.learning_curve(pool, dev, test, args.fractions, seeds, trainer,
                                                    progress=log.info)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(evaluation.format_curve(points))
    rows = [dict(kind="summary", fraction=p.fraction, task=p.task, mean_f1=p.mean_f1,
                 std_f1=p.std_f1, runs=list(p.runs)) for p in points]
    rows += [dict(kind="run", **r) for r in raw]
    _atomic_write(Path(args.output), evaluation.dumps_records(rows))
    return [Path(args.output)], 0


# -- parser ---------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("common options")
    g.add_argument("--scheme", default="builtin", help="scheme YAML file (default: builtin)")
    g.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel document workers")
    g.add_argument("--config", help="YAML/JSON file of option defaults")
    g.add_argument("--strict", action="store_true", help="treat validation violations as failures")
    g.add_argument("--manifest", help="run manifest path (default: next to the output)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _training(p: argparse.ArgumentParser, learning_rate=1e-3):
    g = p.add_argument_group("training")
    g.add_argument("--corpus", required=True)
    g.add_argument("--train-split", default="train")
    g.add_argument("--dev-split", default="dev")
    g.add_argument("--learning-rate", type=float, default=learning_rate)
    g.add_argument("--batch-size", type=int, default=48)
    g.add_argument("--max-epochs", type=int, default=50)
    g.add_argument("--grad-clip", type=float, default=5.0)
    g.add_argument("--l2-penalty", type=float, default=1e-6)
    g.add_argument("--patience", type=int, default=5)
    f = p.add_argument_group("features")
    f.add_argument("--feature-window", type=int, default=2)
    f.add_argument("--hash-bits", type=int, default=20)
    f.add_argument("--no-bigrams", action="store_true")
    f.add_argument("--no-char-classes", action="store_true")


def _span_options(p, defaults=True):
    p.add_argument("--alpha", type=float, default=span.DEFAULT_ALPHA if defaults else None,
                   help="attribute decision threshold")
    p.add_argument("--candidate-window", type=int, default=span.DEFAULT_WINDOW if defaults else None,
                   help="max character gap between relation arguments")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medie", allow_abbrev=False,
                                     description="Medical information annotation and extraction toolkit")
    parser.add_argument("--version", action="version", version=f"medie {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help):
        p = sub.add_parser(name, help=help, description=help, allow_abbrev=False)
        p.set_defaults(func=fn)
        return p

    p = add("validate", cmd_validate, "check a corpus against the annotation scheme")
    p.add_argument("--corpus", required=True)
    p.add_argument("--report", help="write violations as JSON lines")

    p = add("convert", cmd_convert, "normalize a standoff directory into a corpus (or back)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--to", choices=("corpus", "standoff"), default="corpus")

    p = add("encode", cmd_encode, "dump BIO2 tag columns, one sentence per block")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--split")
    p.add_argument("--max-len", type=int, default=256)

    p = add("generate", cmd_generate, "generate a synthetic annotated corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--records", type=int)
    p.add_argument("--generator", help="generator tables YAML (default: bundled)")

    p = add("sample", cmd_sample, "stratified record sampling with a per-condition cap")
    p.add_argument("--records", help="JSON lines with record_id, department, condition")
    p.add_argument("--corpus", help="derive records from a corpus instead")
    p.add_argument("--quota", type=int, default=10)
    p.add_argument("--cap", type=int, default=2)
    p.add_argument("--output", required=True)

    p = add("split", cmd_split, "record-level train/dev/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--counts", type=int, nargs=3, metavar=("TRAIN", "DEV", "TEST"))
    g.add_argument("--ratios", type=float, nargs=3, metavar=("TRAIN", "DEV", "TEST"))

    p = add("train-entity", cmd_train_entity, "train the entity tagger")
    _training(p)
    p.add_argument("--output", required=True)

    p = add("train-span", cmd_train_span, "train the attribute and relation classifiers")
    _training(p)
    _span_options(p)
    p.add_argument("--output", required=True)

    for name, fn, help in (("extract", cmd_extract, "run the extraction pipeline"),
                           ("preannotate", cmd_preannotate, "extract, then randomly drop entities")):
        p = add(name, fn, help)
        p.add_argument("--models", nargs="+", required=True, help="checkpoint file(s)")
        p.add_argument("--corpus", required=True)
        p.add_argument("--output", required=True)
        p.add_argument("--split")
        _span_options(p, defaults=False)
        if name == "preannotate":
            p.add_argument("--drop-rate", type=float, default=0.3)

    p = add("score", cmd_score, "micro P/R/F1 of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--task", choices=evaluation.TASKS + ("all",), default="all")
    p.add_argument("--split")
    p.add_argument("--per-type", action="store_true")
    p.add_argument("--report")

    p = add("iaa", cmd_iaa, "agreement between two annotators")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--per-type", action="store_true")
    p.add_argument("--report")

    p = add("learning-curve", cmd_learning_curve, "F1 versus training-set fraction")
    _training(p)
    _span_options(p)
    p.add_argument("--test-split", default="test")
    p.add_argument("--fractions", type=float, nargs="+", default=[0.2, 0.4, 0.6, 0.8, 1.0])
    p.add_argument("--n-seeds", type=int, default=3)
    p.add_argument("--output", required=True)

    for p in sub.choices.values():
        _common(p)
    return parser


# -- option resolution: command line > environment > config file > default ----

def _flag_given(action, argv) -> bool:
    return any(a == s or a.startswith(s + "=") for a in argv for s in action.option_strings)


def _coerce(action, raw):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        if isinstance(raw, bool):
            return raw
        value = str(raw).strip().lower()
        if value not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise UsageError(f"{action.dest}: expected a boolean, got {raw!r}")
        return value in ("1", "true", "yes", "on")
    convert = action.type or (lambda x: x)
    try:
        if action.nargs in ("+", "*") or isinstance(action.nargs, int):
            items = raw if isinstance(raw, list) else str(raw).replace(",", " ").split()
            return [convert(x) for x in items]
        value = convert(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{action.dest}: {exc}") from None
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"{action.dest}: {value!r} not in {sorted(action.choices)}")
    return value


def _load_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {p} does not exist")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise UsageError(f"{p}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{p}: expected a mapping of option names to values")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve_options(parser, argv, environ=None) -> argparse.Namespace:
    environ = os.environ if environ is None else environ
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    config_path = args.config or environ.get(ENV_PREFIX + "CONFIG")
    file_values = _load_config_file(config_path) if config_path else {}
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise UsageError(f"{config_path}: unknown options {unknown}")
    for action in sub._actions:
        if not action.option_strings or action.dest in ("help", "config") or _flag_given(action, argv):
            continue
        env = environ.get(ENV_PREFIX + action.dest.upper())
        if env is not None:
            setattr(args, action.dest, _coerce(action, env))
        elif action.dest in file_values:
            setattr(args, action.dest, _coerce(action, file_values[action.dest]))
    args.config = config_path
    return args


# -- run manifest ---------------------------------------------------------------

def _manifest_path(args, outputs: list[Path]) -> Path | None:
    if args.manifest:
        return Path(args.manifest)
    if not outputs:
        return None
    first = outputs[0]
    if first.is_dir():
        return first / MANIFEST_NAME
    return first.with_name(first.name + ".manifest.json")


def write_run_manifest(args, argv, outputs: list[Path], started: float, elapsed: float,
                       exit_code: int) -> Path | None:
    path = _manifest_path(args, outputs)
    if path is None:
        return None
    snapshot = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    inputs = {k: snapshot[k] for k in ("corpus", "input", "gold", "pred", "a", "b", "records",
                                       "models", "generator") if snapshot.get(k)}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": snapshot,
        "seed": args.seed,
        "inputs": inputs,
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "exit_code": exit_code,
        # wall-clock fields; everything else is reproducible from the inputs
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "elapsed_seconds": round(elapsed, 3),
    }
    _atomic_write(path, json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True, default=str) + "\n")
    return path


# -- entry point ------------------------------------------------------------------

def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = resolve_options(parser, argv)
    except SystemExit as exc:  # argparse usage errors and --help/--version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"medie: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        print("medie: error: --jobs must be >= 1", file=sys.stderr)
        return 2
    started = time.time()
    t0 = time.perf_counter()
    try:
        scheme = resolve_scheme(args.scheme)
        outputs, code = args.func(args, scheme)
    except StandoffError as exc:
        print(f"medie: invalid annotation: {exc}", file=sys.stderr)
        return 1
    except TrainingError as exc:
        print(f"medie: training failed: {exc}", file=sys.stderr)
        return 1
    except (UsageError, SchemeError, CheckpointError, FileNotFoundError, ValueError) as exc:
        # ValueError here comes from malformed configs or option values
        print(f"medie: error: {exc}", file=sys.stderr)
        return 2
    write_run_manifest(args, argv, outputs, started, time.perf_counter() - t0, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
