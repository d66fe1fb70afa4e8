"""Micro and per-type precision / recall / F1 over exact tuple matches.

Tuples are compared by strict equality of every component. Collection-level
tuples carry the document id so identical spans in different documents never
match each other::

    entity     (type, doc_id, start, end)
    relation   (type, doc_id, (htype, hstart, hend), (ttype, tstart, tend))
    attribute  (type, doc_id, (etype, estart, eend))

Empty denominators give 0 (P when nothing is predicted, R when nothing is
gold) and F1 is 0 when P + R = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .scheme import AnnotationSet

TASKS = ("entity", "relation", "attribute")


@dataclass(frozen=True)
class Counts:
    gold: int = 0
    pred: int = 0
    correct: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.gold + other.gold, self.pred + other.pred, self.correct + other.correct)

    @property
    def precision(self) -> float:
        return self.correct / self.pred if self.pred else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class EvalReport:
    task: str
    counts: Counts
    per_type: dict = field(default_factory=dict)

    precision = property(lambda self: self.counts.precision)
    recall = property(lambda self: self.counts.recall)
    f1 = property(lambda self: self.counts.f1)
    n_gold = property(lambda self: self.counts.gold)
    n_pred = property(lambda self: self.counts.pred)
    n_correct = property(lambda self: self.counts.correct)

    def to_records(self) -> list[dict]:
        rows = [dict(task=self.task, type="(micro)", precision=self.precision, recall=self.recall,
                     f1=self.f1, gold=self.n_gold, pred=self.n_pred, correct=self.n_correct)]
        for t in sorted(self.per_type):
            c = self.per_type[t]
            rows.append(dict(task=self.task, type=t, precision=c.precision, recall=c.recall,
                             f1=c.f1, gold=c.gold, pred=c.pred, correct=c.correct))
        return rows

    def summary_line(self) -> str:
        return f"P={self.precision:.4f} R={self.recall:.4f} F1={self.f1:.4f}"


def score(gold: Iterable[tuple], pred: Iterable[tuple], task: str = "entity",
          type_of: Callable[[tuple], str] = lambda t: t[0]) -> EvalReport:
    gold, pred = set(gold), set(pred)
    correct = gold & pred
    per_type: dict[str, Counts] = {}
    for bucket, attr in ((gold, 0), (pred, 1), (correct, 2)):
        for tup in bucket:
            t = type_of(tup)
            c = per_type.get(t, Counts())
            inc = [0, 0, 0]
            inc[attr] = 1
            per_type[t] = c + Counts(*inc)
    return EvalReport(task, Counts(len(gold), len(pred), len(correct)), per_type)


def task_tuples(anns: Iterable[AnnotationSet], task: str) -> set[tuple]:
    out = set()
    for a in anns:
        doc_id = a.doc.doc_id
        if task == "entity":
            out.update((e.type, doc_id, e.start, e.end) for e in a.entities)
        elif task == "relation":
            out.update((r.type, doc_id, r.head.as_tuple(), r.tail.as_tuple()) for r in a.relations)
        elif task == "attribute":
            out.update((x.type, doc_id, x.entity.as_tuple()) for x in a.attributes)
        else:
            raise ValueError(f"unknown task {task!r}")
    return out


def score_task(gold: Sequence[AnnotationSet], pred: Sequence[AnnotationSet], task: str) -> EvalReport:
    return score(task_tuples(gold, task), task_tuples(pred, task), task)


def score_all(gold: Sequence[AnnotationSet], pred: Sequence[AnnotationSet],
              tasks: Sequence[str] = TASKS) -> dict[str, EvalReport]:
    return {t: score_task(gold, pred, t) for t in tasks}


def iaa(ann1: Sequence[AnnotationSet], ann2: Sequence[AnnotationSet]) -> dict[str, EvalReport]:
    """Agreement of annotator 2 against annotator 1 taken as ground truth."""
    ids1 = sorted(a.doc.doc_id for a in ann1)
    ids2 = sorted(a.doc.doc_id for a in ann2)
    if ids1 != ids2:
        missing = sorted(set(ids1) ^ set(ids2))
        raise ValueError(f"annotators cover different documents: {missing[:5]}")
    return score_all(ann1, ann2)


def format_reports(reports: dict[str, EvalReport], per_type: bool = False) -> str:
    lines = [f"{'task':<10} {'type':<36} {'P':>7} {'R':>7} {'F1':>7} {'gold':>6} {'pred':>6} {'corr':>6}"]
    for task, rep in reports.items():
        rows = rep.to_records() if per_type else rep.to_records()[:1]
        for r in rows:
            lines.append(f"{task:<10} {r['type']:<36} {r['precision']:7.4f} {r['recall']:7.4f} "
                         f"{r['f1']:7.4f} {r['gold']:6d} {r['pred']:6d} {r['correct']:6d}")
    return "\n".join(lines)


# -- learning curve -------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    task: str
    mean_f1: float
    std_f1: float
    runs: tuple  # per-seed F1 values, in seed order


def subsample_records(pool: Sequence[AnnotationSet], fraction: float, seed: int) -> list[AnnotationSet]:
    """All documents of a random ``fraction`` of the pool's records."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction {fraction} outside (0, 1]")
    records = sorted({a.doc.record_id for a in pool})
    k = int(round(fraction * len(records)))
    if k == 0:
        raise ValueError(f"fraction {fraction} of {len(records)} records is an empty training set")
    rng = np.random.default_rng(seed)
    chosen = set(records[i] for i in rng.choice(len(records), size=k, replace=False))
    return [a for a in pool if a.doc.record_id in chosen]


def _curve_run(args) -> tuple[list[dict], str]:
    train_pool, dev, test, fraction, seed, trainer = args
    subset = subsample_records(train_pool, fraction, seed)
    model = trainer(subset, list(dev), seed)
    preds = [model.extract(a.doc) for a in test]
    reports = score_all(test, preds)
    rows = [dict(fraction=fraction, seed=seed, task=task, f1=rep.f1,
                 precision=rep.precision, recall=rep.recall,
                 n_train_records=len({a.doc.record_id for a in subset}))
            for task, rep in reports.items()]
    note = f"fraction={fraction} seed={seed} " + " ".join(f"{t}={r.f1:.4f}" for t, r in reports.items())
    return rows, note


def learning_curve(train_pool: Sequence[AnnotationSet], dev: Sequence[AnnotationSet],
                   test: Sequence[AnnotationSet], fractions: Sequence[float], seeds: Sequence[int],
                   trainer: Callable, progress: Callable[[str], None] | None = None,
                   map_fn: Callable = map) -> tuple[list[CurvePoint], list[dict]]:
    """Train on record subsamples and score on a fixed test set.

    ``trainer(train_docs, dev_docs, seed)`` must return an object with an
    ``extract(doc) -> AnnotationSet`` method. Each (fraction, seed) run is an
    independent task; ``map_fn`` (e.g. an executor's ``map``) may run them in
    parallel as long as it preserves order. Returns the summary points and the
    raw per-run rows.
    """
    for fraction in fractions:
        subsample_records(train_pool, fraction, 0)  # fail fast on empty subsets
    jobs = [(train_pool, dev, test, f, s, trainer) for f in fractions for s in seeds]
    raw = []
    for rows, note in map_fn(_curve_run, jobs):
        raw.extend(rows)
        if progress:
            progress(note)
    points = []
    for fraction in fractions:
        for task in TASKS:
            vals = [r["f1"] for r in raw if r["fraction"] == fraction and r["task"] == task]
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            points.append(CurvePoint(fraction, task, float(np.mean(vals)), std, tuple(vals)))
    return points, raw


def format_curve(points: Sequence[CurvePoint]) -> str:
    lines = [f"{'fraction':>8} {'task':<10} {'mean F1':>8} {'std':>8}"]
    for p in points:
        lines.append(f"{p.fraction:8.2f} {p.task:<10} {p.mean_f1:8.4f} {p.std_f1:8.4f}")
    return "\n".join(lines)


def dumps_records(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows)


def is_nondecreasing(values: Sequence[float], tolerance: float = 0.0) -> bool:
    """True when no later value falls more than ``tolerance`` below any earlier one."""
    best = -math.inf
    for v in values:
        if math.isnan(v) or v < best - tolerance - 1e-12:
            return False
        best = max(best, v)
    return True
