"""Span-based attribute and relation classifiers.

An entity is represented by max-pooling the per-character hashed feature
vectors over its span. Attributes use independent sigmoids over the attribute
types plus ``None``; relations use a softmax over the relation types plus
``None`` on the concatenation ``[head ; tail]`` (tail features live in a
second copy of the hash space, offset by ``hash_dim``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit as sigmoid

from .evaluation import score
from .features import FeatureConfig, FeatureIndex, featurize
from .optim import AdamW, TrainConfig, TrainingError, clip_grad_norm
from .scheme import AnnotationSet, Attribute, Document, Entity, Relation, SchemeRegistry, builtin_scheme

log = logging.getLogger(__name__)

NONE = "None"
DEFAULT_ALPHA = 0.5
DEFAULT_WINDOW = 150


def softmax(x, axis=-1):
    z = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


@dataclass(frozen=True)
class SpanRep:
    """Sparse pooled vector: sorted hashed ``ids`` with their ``values``."""

    ids: np.ndarray
    values: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, SpanRep) and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.ids.tobytes(), self.values.tobytes()))


class DocFeatures:
    """Per-character hashed features of one document."""

    def __init__(self, text: str, config: FeatureConfig):
        self.text = text
        self.config = config
        self.indptr, self.ids = featurize(text, config)

    @classmethod
    def from_positions(cls, positions: Sequence[Sequence[int]], config: FeatureConfig) -> "DocFeatures":
        self = cls.__new__(cls)
        self.text = None
        self.config = config
        self.indptr = np.cumsum([0] + [len(p) for p in positions]).astype(np.int64)
        self.ids = np.asarray([i for p in positions for i in p], dtype=np.int64)
        return self

    def position(self, t: int) -> np.ndarray:
        return self.ids[self.indptr[t]:self.indptr[t + 1]]


def pool_span(doc: DocFeatures, entity: Entity) -> SpanRep:
    """Element-wise max of the position count vectors over ``[start, end)``."""
    if not 0 <= entity.start < entity.end <= len(doc.indptr) - 1:
        raise ValueError(f"span {entity.as_tuple()} outside document")
    lo, hi = doc.indptr[entity.start], doc.indptr[entity.end]
    ids = doc.ids[lo:hi]
    pos = np.repeat(np.arange(entity.start, entity.end), np.diff(doc.indptr[entity.start:entity.end + 1]))
    # count of each id per position, then the max over positions
    order = np.lexsort((pos, ids))
    ids, pos = ids[order], pos[order]
    if len(ids) == 0:
        return SpanRep(np.zeros(0, dtype=np.int64), np.zeros(0))
    new_pair = np.r_[True, (ids[1:] != ids[:-1]) | (pos[1:] != pos[:-1])]
    pair_start = np.flatnonzero(new_pair)
    pair_counts = np.diff(np.r_[pair_start, len(ids)])
    pair_ids = ids[pair_start]
    new_id = np.r_[True, pair_ids[1:] != pair_ids[:-1]]
    id_start = np.flatnonzero(new_id)
    return SpanRep(pair_ids[id_start], np.maximum.reduceat(pair_counts, id_start).astype(float))


def _concat(head: SpanRep, tail: SpanRep, hash_dim: int) -> SpanRep:
    return SpanRep(np.concatenate([head.ids, tail.ids + hash_dim]),
                   np.concatenate([head.values, tail.values]))


def _row(index: FeatureIndex, rep: SpanRep) -> tuple[np.ndarray, np.ndarray]:
    cols = index.lookup(rep.ids)
    keep = cols >= 0
    return cols[keep], rep.values[keep]


def _design(index: FeatureIndex, reps: Sequence[SpanRep]) -> sp.csr_matrix:
    indptr, cols, vals = [0], [], []
    for rep in reps:
        c, v = _row(index, rep)
        cols.append(c)
        vals.append(v)
        indptr.append(indptr[-1] + len(c))
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    return sp.csr_matrix((vals, cols, np.asarray(indptr)), shape=(len(reps), len(index)))


# -- attributes --------------------------------------------------------------

@dataclass
class AttributeModel:
    classes: tuple  # (NONE, *attribute types)
    feature_config: FeatureConfig
    index: FeatureIndex
    weights: np.ndarray  # [n_features, n_classes]
    bias: np.ndarray
    alpha: float = DEFAULT_ALPHA
    history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, attribute_types: Sequence[str], feature_config: FeatureConfig | None = None,
              index: FeatureIndex | None = None, alpha: float = DEFAULT_ALPHA) -> "AttributeModel":
        index = index if index is not None else FeatureIndex()
        classes = (NONE,) + tuple(attribute_types)
        return cls(classes, feature_config or FeatureConfig(), index,
                   np.zeros((len(index), len(classes))), np.zeros(len(classes)), alpha)

    def logits(self, rep: SpanRep) -> np.ndarray:
        cols, vals = _row(self.index, rep)
        return self.bias + vals @ self.weights[cols]

    def probabilities(self, rep: SpanRep) -> np.ndarray:
        return sigmoid(self.logits(rep))


def decide_attributes(probs: np.ndarray, classes: Sequence[str], alpha: float,
                      applicable: Iterable[str]) -> set[str]:
    """Threshold rule: nothing if p(None) > alpha, else types with p > alpha that apply."""
    if probs[0] > alpha:
        return set()
    applicable = set(applicable)
    return {c for c, p in zip(classes[1:], probs[1:]) if p > alpha and c in applicable}


def predict_attributes(model: AttributeModel, rep: SpanRep, entity_type: str,
                       scheme: SchemeRegistry) -> set[str]:
    return decide_attributes(model.probabilities(rep), model.classes, model.alpha,
                             scheme.applicable_attributes(entity_type))


# -- relations ---------------------------------------------------------------

@dataclass
class RelationModel:
    classes: tuple  # (NONE, *relation types)
    feature_config: FeatureConfig
    index: FeatureIndex  # over the doubled hash space
    weights: np.ndarray
    bias: np.ndarray
    window: int = DEFAULT_WINDOW
    history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, relation_types: Sequence[str], feature_config: FeatureConfig | None = None,
              index: FeatureIndex | None = None, window: int = DEFAULT_WINDOW) -> "RelationModel":
        index = index if index is not None else FeatureIndex()
        classes = (NONE,) + tuple(relation_types)
        return cls(classes, feature_config or FeatureConfig(), index,
                   np.zeros((len(index), len(classes))), np.zeros(len(classes)), window)

    def logits(self, head_rep: SpanRep, tail_rep: SpanRep) -> np.ndarray:
        cols, vals = _row(self.index, _concat(head_rep, tail_rep, self.feature_config.hash_dim))
        return self.bias + vals @ self.weights[cols]

    def posterior(self, head_rep: SpanRep, tail_rep: SpanRep) -> np.ndarray:
        return softmax(self.logits(head_rep, tail_rep))


def span_gap(a: Entity, b: Entity) -> int:
    return max(0, max(a.start, b.start) - min(a.end, b.end))


def candidate_pairs(entities: Iterable[Entity], scheme: SchemeRegistry,
                    window: int = DEFAULT_WINDOW) -> list[tuple[Entity, Entity, tuple]]:
    """Ordered (head, tail, allowed types) within ``window`` characters of each other."""
    ents = sorted(entities, key=lambda e: (e.start, e.end, e.type))
    out = []
    for h in ents:
        for t in ents:
            if h == t or span_gap(h, t) > window:
                continue
            allowed = scheme.allowed_relations(h.type, t.type)
            if allowed:
                out.append((h, t, allowed))
    return out


def _class_mask(classes: Sequence[str], allowed: Iterable[str]) -> np.ndarray:
    allowed = set(allowed) | {NONE}
    return np.array([c in allowed for c in classes])


def decide_relation(logits: np.ndarray, classes: Sequence[str], allowed: Iterable[str]) -> str | None:
    """Argmax over ``allowed`` plus ``None``; ties go to the earlier class."""
    masked = np.where(_class_mask(classes, allowed), logits, -np.inf)
    best = classes[int(np.argmax(masked))]
    return None if best == NONE else best


def predict_relation(model: RelationModel, head_rep: SpanRep, tail_rep: SpanRep,
                     allowed: Iterable[str]) -> str | None:
    return decide_relation(model.logits(head_rep, tail_rep), model.classes, allowed)


# -- inference over documents ------------------------------------------------

def doc_reps(feats: DocFeatures, entities: Iterable[Entity]) -> dict[Entity, SpanRep]:
    return {e: pool_span(feats, e) for e in entities}


def predict_doc(attr: AttributeModel, rel: RelationModel, doc: Document, entities: Iterable[Entity],
                scheme: SchemeRegistry, feats: DocFeatures | None = None
                ) -> tuple[set[Attribute], set[Relation]]:
    entities = list(entities)
    feats = feats or DocFeatures(doc.text, attr.feature_config)
    reps = doc_reps(feats, entities)
    attrs = set()
    for e in entities:
        for a in predict_attributes(attr, reps[e], e.type, scheme):
            attrs.add(Attribute(a, e))
    rels = set()
    for h, t, allowed in candidate_pairs(entities, scheme, rel.window):
        r = predict_relation(rel, reps[h], reps[t], allowed)
        if r is not None:
            rels.add(Relation(r, h, t))
    return attrs, rels


# -- training ----------------------------------------------------------------

@dataclass
class _Examples:
    reps: list
    targets: list  # attribute: multi-hot rows; relation: class index
    masks: list    # relation only: allowed-class masks
    X: sp.csr_matrix | None = None


def _attribute_examples(anns: Sequence[AnnotationSet], classes, feature_config, cache) -> _Examples:
    ex = _Examples([], [], [])
    for a in anns:
        feats = cache(a.doc)
        by_entity: dict[Entity, set] = {}
        for x in a.attributes:
            by_entity.setdefault(x.entity, set()).add(x.type)
        for e in sorted(a.entities):
            types = by_entity.get(e, set())
            ex.reps.append(pool_span(feats, e))
            row = np.array([float(not types)] + [float(c in types) for c in classes[1:]])
            ex.targets.append(row)
    return ex


def _relation_examples(anns: Sequence[AnnotationSet], classes, feature_config, scheme, window, cache) -> _Examples:
    ex = _Examples([], [], [])
    class_id = {c: i for i, c in enumerate(classes)}
    for a in anns:
        feats = cache(a.doc)
        gold: dict[tuple, str] = {}
        for r in sorted(a.relations):
            gold.setdefault((r.head, r.tail), r.type)
        pairs = {(h, t): allowed for h, t, allowed in candidate_pairs(a.entities, scheme, window)}
        for (h, t), rtype in gold.items():
            if (h, t) not in pairs:
                pairs[(h, t)] = scheme.allowed_relations(h.type, t.type) or (rtype,)
        reps = doc_reps(feats, a.entities)
        for (h, t) in sorted(pairs):
            allowed = pairs[(h, t)]
            label = gold.get((h, t), NONE)
            ex.reps.append(_concat(reps[h], reps[t], feature_config.hash_dim))
            ex.targets.append(class_id[label])
            ex.masks.append(_class_mask(classes, set(allowed) | {label}))
    return ex


def _fit(weights, bias, X, loss_grad, config: TrainConfig, evaluate: Callable[[], float], name: str,
         on_epoch=None):
    """Shared minibatch AdamW loop with clipping and dev-F1 early stopping."""
    n = X.shape[0]
    optimizer = AdamW([weights, bias], lr=config.learning_rate, weight_decay=config.l2_penalty)
    rng = np.random.default_rng(config.seed)
    best_f1, best, stale, history = -1.0, (weights.copy(), bias.copy()), 0, []
    if n == 0:
        return best, history
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size), start=1):
            idx = order[start:start + config.batch_size]
            Xb = X[idx]
            logits = np.asarray(Xb @ weights) + bias
            loss, d_logits = loss_grad(logits, idx)
            if not math.isfinite(loss):
                raise TrainingError(f"{name}: non-finite loss at epoch {epoch}, batch {b}")
            g_w = np.asarray(Xb.T @ d_logits) / len(idx)
            g_b = d_logits.sum(axis=0) / len(idx)
            clip_grad_norm([g_w, g_b], config.grad_clip_l2)
            optimizer.step([g_w, g_b])
            total += loss
        f1 = evaluate()
        record = dict(epoch=epoch, loss=total / n, dev_f1=f1)
        history.append(record)
        log.info("%s epoch %d loss %.4f dev F1 %.4f", name, epoch, record["loss"], f1)
        if on_epoch:
            on_epoch(name, record)
        if f1 > best_f1:
            best_f1, stale, best = f1, 0, (weights.copy(), bias.copy())
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history


def train_span_models(corpus: Sequence[AnnotationSet], dev: Sequence[AnnotationSet],
                      config: TrainConfig | None = None, feature_config: FeatureConfig | None = None,
                      scheme: SchemeRegistry | None = None, alpha: float = DEFAULT_ALPHA,
                      window: int = DEFAULT_WINDOW, relation_config: TrainConfig | None = None,
                      on_epoch=None) -> tuple[AttributeModel, RelationModel]:
    """Train both heads on gold entities; keep each head's best dev-F1 weights.

    Attribute loss: summed binary cross-entropy over all classes (``None`` is
    on exactly when the entity has no attribute). Relation loss: cross-entropy
    over the pair's allowed types plus ``None``; pairs from
    :func:`candidate_pairs` without a gold relation are ``None`` examples.
    Dev F1 is measured with gold entities.
    """
    config = config or TrainConfig()
    relation_config = relation_config or config
    feature_config = feature_config or FeatureConfig()
    scheme = scheme or builtin_scheme()
    corpus, dev = list(corpus), list(dev)
    if not corpus:
        raise ValueError("training corpus is empty")
    if not dev:
        raise ValueError("dev set is empty")

    cache_store: dict[str, DocFeatures] = {}

    def cache(doc: Document) -> DocFeatures:
        key = doc.doc_id + "\0" + doc.text
        if key not in cache_store:
            cache_store[key] = DocFeatures(doc.text, feature_config)
        return cache_store[key]

    # attributes
    attr_classes = (NONE,) + scheme.attribute_names
    tr = _attribute_examples(corpus, attr_classes, feature_config, cache)
    attr = AttributeModel.zeros(scheme.attribute_names, feature_config,
                                FeatureIndex.from_arrays(r.ids for r in tr.reps), alpha)
    tr.X = _design(attr.index, tr.reps)
    Y = np.array(tr.targets).reshape(-1, len(attr_classes))

    def attr_loss(logits, idx):
        p = sigmoid(logits)
        y = Y[idx]
        # stable BCE from logits
        loss = np.sum(np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits))))
        return float(loss), p - y

    gold_attr = {(x.type, a.doc.doc_id, x.entity.as_tuple()) for a in dev for x in a.attributes}
    dev_attr_items = [(a.doc.doc_id, e, pool_span(cache(a.doc), e)) for a in dev for e in sorted(a.entities)]
    dev_attr_X = _design(attr.index, [r for _, _, r in dev_attr_items])

    def attr_f1():
        probs = sigmoid(np.asarray(dev_attr_X @ attr.weights) + attr.bias)
        pred = set()
        for (doc_id, e, _), p in zip(dev_attr_items, probs):
            for t in decide_attributes(p, attr.classes, attr.alpha, scheme.applicable_attributes(e.type)):
                pred.add((t, doc_id, e.as_tuple()))
        return score(gold_attr, pred).f1

    (attr.weights, attr.bias), attr.history = _fit(
        attr.weights, attr.bias, tr.X, attr_loss, config, attr_f1, "attribute", on_epoch)

    # relations
    rel_classes = (NONE,) + scheme.relation_names
    rtr = _relation_examples(corpus, rel_classes, feature_config, scheme, window, cache)
    rel = RelationModel.zeros(scheme.relation_names, feature_config,
                              FeatureIndex.from_arrays(r.ids for r in rtr.reps), window)
    rtr.X = _design(rel.index, rtr.reps)
    labels = np.asarray(rtr.targets, dtype=np.int64)
    masks = np.asarray(rtr.masks, dtype=bool).reshape(-1, len(rel_classes))

    def rel_loss(logits, idx):
        z = np.where(masks[idx], logits, -np.inf)
        p = softmax(z)
        y = labels[idx]
        picked = p[np.arange(len(idx)), y]
        loss = -np.sum(np.log(np.maximum(picked, 1e-300)))
        d = p.copy()
        d[np.arange(len(idx)), y] -= 1.0
        return float(loss), d

    gold_rel = {(r.type, a.doc.doc_id, r.head.as_tuple(), r.tail.as_tuple()) for a in dev for r in a.relations}
    dev_rel_items, dev_rel_reps = [], []
    for a in dev:
        reps = doc_reps(cache(a.doc), a.entities)
        for h, t, allowed in candidate_pairs(a.entities, scheme, window):
            dev_rel_items.append((a.doc.doc_id, h, t, allowed))
            dev_rel_reps.append(_concat(reps[h], reps[t], feature_config.hash_dim))
    dev_rel_X = _design(rel.index, dev_rel_reps)

    def rel_f1():
        logits = np.asarray(dev_rel_X @ rel.weights) + rel.bias
        pred = set()
        for (doc_id, h, t, allowed), lg in zip(dev_rel_items, logits):
            r = decide_relation(lg, rel.classes, allowed)
            if r is not None:
                pred.add((r, doc_id, h.as_tuple(), t.as_tuple()))
        return score(gold_rel, pred).f1

    (rel.weights, rel.bias), rel.history = _fit(
        rel.weights, rel.bias, rtr.X, rel_loss, relation_config, rel_f1, "relation", on_epoch)
    return attr, rel


# -- state -------------------------------------------------------------------

def attribute_state(model: AttributeModel) -> tuple[dict, dict]:
    meta = dict(classes=list(model.classes), feature_config=model.feature_config.to_dict(),
                alpha=model.alpha, history=model.history)
    return meta, dict(feature_ids=model.index.ids, weights=model.weights, bias=model.bias)


def attribute_from_state(meta: dict, arrays: dict) -> AttributeModel:
    return AttributeModel(tuple(meta["classes"]), FeatureConfig(**meta["feature_config"]),
                          FeatureIndex(arrays["feature_ids"]), arrays["weights"].astype(float),
                          arrays["bias"].astype(float), float(meta["alpha"]), list(meta.get("history", [])))


def relation_state(model: RelationModel) -> tuple[dict, dict]:
    meta = dict(classes=list(model.classes), feature_config=model.feature_config.to_dict(),
                window=model.window, history=model.history)
    return meta, dict(feature_ids=model.index.ids, weights=model.weights, bias=model.bias)


def relation_from_state(meta: dict, arrays: dict) -> RelationModel:
    return RelationModel(tuple(meta["classes"]), FeatureConfig(**meta["feature_config"]),
                         FeatureIndex(arrays["feature_ids"]), arrays["weights"].astype(float),
                         arrays["bias"].astype(float), int(meta["window"]), list(meta.get("history", [])))
