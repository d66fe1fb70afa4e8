"""Linear-chain CRF entity recogniser over hashed sparse features.

Array conventions: ``em`` is a ``[T, K]`` emission score matrix and ``trans``
a ``[K + 2, K + 2]`` transition matrix where index ``K`` is the begin state
and ``K + 1`` the end state, so ``trans[K, j]`` scores starting in tag ``j``
and ``trans[i, K + 1]`` scores ending in tag ``i``. Entries may be ``-inf``
(forbidden transitions). All recursions run in log space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import bio
from .evaluation import score
from .features import FeatureConfig, FeatureIndex, featurize, segment
from .optim import AdamW, TrainConfig, TrainingError, clip_grad_norm
from .scheme import AnnotationSet, Document, Entity, SchemeRegistry, builtin_scheme

log = logging.getLogger(__name__)


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())[()]


def _parts(trans: np.ndarray):
    K = trans.shape[0] - 2
    return trans[K, :K], trans[:K, :K], trans[:K, K + 1]


def forward(em: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, float]:
    """Forward log-scores ``alpha[t, k]`` and the log partition."""
    start, pair, end = _parts(trans)
    T, K = em.shape
    alpha = np.empty((T, K))
    alpha[0] = start + em[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + pair, axis=0) + em[t]
    return alpha, float(logsumexp(alpha[-1] + end))


def backward(em: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, float]:
    """Backward log-scores ``beta[t, k]`` and the log partition."""
    start, pair, end = _parts(trans)
    T, K = em.shape
    beta = np.empty((T, K))
    beta[-1] = end
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(pair + (em[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta, float(logsumexp(start + em[0] + beta[0]))


def log_partition_scores(em: np.ndarray, trans: np.ndarray) -> float:
    return forward(em, trans)[1]


def sequence_score(em: np.ndarray, trans: np.ndarray, tags: Sequence[int]) -> float:
    start, pair, end = _parts(trans)
    tags = np.asarray(tags)
    s = start[tags[0]] + end[tags[-1]] + em[np.arange(len(tags)), tags].sum()
    if len(tags) > 1:
        s += pair[tags[:-1], tags[1:]].sum()
    return float(s)


def marginals(em: np.ndarray, trans: np.ndarray):
    """Node marginals ``[T, K]``, edge marginals ``[T - 1, K, K]`` and log Z."""
    _, pair, _ = _parts(trans)
    alpha, logz = forward(em, trans)
    beta, _ = backward(em, trans)
    node = np.exp(alpha + beta - logz)
    if len(em) > 1:
        edge = np.exp(alpha[:-1, :, None] + pair[None, :, :]
                      + (em[1:] + beta[1:])[:, None, :] - logz)
    else:
        edge = np.zeros((0,) + pair.shape)
    return node, edge, logz


def viterbi_scores(em: np.ndarray, trans: np.ndarray) -> tuple[list[int], float]:
    """Best tag path and its score; ties go to the lowest tag index."""
    start, pair, end = _parts(trans)
    T, K = em.shape
    delta = start + em[0]
    back = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + pair
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(K)] + em[t]
    final = delta + end
    best = int(np.argmax(final))
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    return path[::-1], float(np.max(final))


def nll_scores(em: np.ndarray, trans: np.ndarray, gold: Sequence[int]):
    """Negative log-likelihood of ``gold`` and its gradients w.r.t. ``em``/``trans``."""
    node, edge, logz = marginals(em, trans)
    gold = np.asarray(gold)
    T, K = em.shape
    loss = logz - sequence_score(em, trans, gold)

    d_em = node.copy()
    d_em[np.arange(T), gold] -= 1.0
    d_trans = np.zeros_like(trans)
    d_trans[:K, :K] = edge.sum(axis=0)
    if T > 1:
        np.add.at(d_trans, (gold[:-1], gold[1:]), -1.0)
    d_trans[K, :K] = node[0]
    d_trans[K, gold[0]] -= 1.0
    d_trans[:K, K + 1] = node[-1]
    d_trans[gold[-1], K + 1] -= 1.0
    return loss, d_em, d_trans


# -- model ---------------------------------------------------------------------

def bio_transition_mask(tags: Sequence[str], constrained: bool = True) -> np.ndarray:
    """Which entries of the ``[K + 2, K + 2]`` transition matrix are usable."""
    K = len(tags)
    allowed = np.zeros((K + 2, K + 2), dtype=bool)
    allowed[:K, :K] = True
    allowed[K, :K] = True
    allowed[:K, K + 1] = True
    if constrained:
        for j, tag in enumerate(tags):
            if tag.startswith("I-"):
                typ = tag[2:]
                allowed[K, j] = False
                for i, prev in enumerate(tags):
                    if prev not in (f"B-{typ}", f"I-{typ}"):
                        allowed[i, j] = False
    return allowed


@dataclass
class CrfModel:
    """Emission weights ``[n_features, K]`` over a compact feature index, plus transitions.

    Row ``r`` of ``weights`` belongs to hashed feature ``index.ids[r]``; every
    other hashed id has an implicit all-zero row.
    """

    tags: tuple
    feature_config: FeatureConfig
    index: FeatureIndex
    weights: np.ndarray
    transitions: np.ndarray
    allowed: np.ndarray
    history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, tags: Sequence[str], feature_config: FeatureConfig | None = None,
              index: FeatureIndex | None = None, constrained: bool = True) -> "CrfModel":
        feature_config = feature_config or FeatureConfig()
        index = index if index is not None else FeatureIndex()
        K = len(tags)
        return cls(tuple(tags), feature_config, index, np.zeros((len(index), K)),
                   np.zeros((K + 2, K + 2)), bio_transition_mask(tags, constrained))

    @property
    def num_tags(self) -> int:
        return len(self.tags)

    def effective_transitions(self) -> np.ndarray:
        return np.where(self.allowed, self.transitions, -np.inf)

    def feature_matrix(self, text: str) -> sp.csr_matrix:
        indptr, ids = featurize(text, self.feature_config)
        return self.index.matrix(indptr, ids)

    def tag_ids(self, tags: Sequence[str]) -> list[int]:
        lookup = {t: i for i, t in enumerate(self.tags)}
        return [lookup[t] for t in tags]

    def l2(self) -> float:
        return float(np.sum(self.weights ** 2) + np.sum(self.transitions[self.allowed] ** 2))


def _text(doc) -> str:
    return doc.text if isinstance(doc, Document) else doc


def emissions(model: CrfModel, doc) -> np.ndarray:
    X = model.feature_matrix(_text(doc))
    return np.asarray(X @ model.weights)


def log_partition(model: CrfModel, doc) -> float:
    return log_partition_scores(emissions(model, doc), model.effective_transitions())


def viterbi(model: CrfModel, doc) -> list[str]:
    em = emissions(model, doc)
    if len(em) == 0:
        return []
    path, _ = viterbi_scores(em, model.effective_transitions())
    return [model.tags[i] for i in path]


@dataclass
class CrfGradient:
    weights: np.ndarray
    transitions: np.ndarray


def nll_and_gradient(model: CrfModel, doc, gold: Sequence[str], l2_penalty: float = 0.0,
                     X: sp.csr_matrix | None = None) -> tuple[float, CrfGradient]:
    """Loss ``log Z - score(gold) + l2_penalty * |w|^2 / 2`` and its gradient."""
    if X is None:
        X = model.feature_matrix(_text(doc))
    if X.shape[0] != len(gold):
        raise ValueError("gold tag sequence length differs from document length")
    em = np.asarray(X @ model.weights)
    loss, d_em, d_trans = nll_scores(em, model.effective_transitions(), model.tag_ids(gold))
    d_w = np.asarray(X.T @ d_em)
    d_trans = np.where(model.allowed, d_trans, 0.0)
    if l2_penalty:
        loss += 0.5 * l2_penalty * model.l2()
        d_w += l2_penalty * model.weights
        d_trans += np.where(model.allowed, l2_penalty * model.transitions, 0.0)
    return float(loss), CrfGradient(d_w, d_trans)


def predict_entities(model: CrfModel, text: str) -> set[Entity]:
    """Decode a whole document sentence by sentence."""
    out = set()
    trans = model.effective_transitions()
    for s, e in segment(text):
        piece = text[s:e]
        if not piece.strip():
            continue
        em = np.asarray(model.feature_matrix(piece) @ model.weights)
        path, _ = viterbi_scores(em, trans)
        for ent in bio.decode([model.tags[i] for i in path]):
            out.add(Entity(ent.type, ent.start + s, ent.end + s))
    return out


# -- training ----------------------------------------------------------------

@dataclass
class _Sentence:
    doc_index: int
    offset: int
    text: str
    indptr: np.ndarray
    ids: np.ndarray
    gold: list
    X: sp.csr_matrix | None = None


def _as_pairs(items) -> list[tuple[str, str, frozenset]]:
    out = []
    for i, item in enumerate(items):
        if isinstance(item, AnnotationSet):
            out.append((item.doc.doc_id, item.doc.text, frozenset(item.entities)))
        else:
            doc, ents = item
            doc_id = doc.doc_id if isinstance(doc, Document) else str(i)
            out.append((doc_id, _text(doc), frozenset(ents)))
    return out


def _sentences(pairs, feature_config) -> list[_Sentence]:
    out = []
    for k, (_, text, ents) in enumerate(pairs):
        for s, e in segment(text, [(x.start, x.end) for x in ents]):
            piece = text[s:e]
            if not piece.strip():
                continue
            inside = [Entity(x.type, x.start - s, x.end - s) for x in ents if s <= x.start and x.end <= e]
            indptr, ids = featurize(piece, feature_config)
            out.append(_Sentence(k, s, piece, indptr, ids, bio.encode(inside, len(piece))))
    return out


def _entity_f1(model: CrfModel, sentences: list[_Sentence], pairs) -> float:
    trans = model.effective_transitions()
    pred = set()
    for sent in sentences:
        em = np.asarray(sent.X @ model.weights)
        path, _ = viterbi_scores(em, trans)
        for ent in bio.decode([model.tags[i] for i in path]):
            pred.add((ent.type, sent.doc_index, ent.start + sent.offset, ent.end + sent.offset))
    gold = {(e.type, k, e.start, e.end) for k, (_, _, ents) in enumerate(pairs) for e in ents}
    return score(gold, pred).f1


def train(corpus, dev, config: TrainConfig | None = None,
          feature_config: FeatureConfig | None = None, scheme: SchemeRegistry | None = None,
          tags: Sequence[str] | None = None, constrained: bool = True,
          on_epoch: Callable[[dict], None] | None = None) -> CrfModel:
    """Fit a CRF with AdamW; return the checkpoint with the best dev entity F1.

    ``corpus``/``dev`` hold :class:`AnnotationSet` objects or ``(doc, entities)``
    pairs. Training units are sentences. The data term is averaged over each
    batch, clipped to ``grad_clip_l2`` and applied with decoupled weight decay
    ``l2_penalty``.
    """
    config = config or TrainConfig()
    feature_config = feature_config or FeatureConfig()
    train_pairs, dev_pairs = _as_pairs(corpus), _as_pairs(dev)
    if not train_pairs:
        raise ValueError("training corpus is empty")
    if not dev_pairs:
        raise ValueError("dev set is empty")
    if tags is None:
        tags = bio.scheme_tags(scheme or builtin_scheme())

    train_sents = _sentences(train_pairs, feature_config)
    dev_sents = _sentences(dev_pairs, feature_config)
    if not train_sents:
        raise ValueError("training corpus has no non-blank text")
    index = FeatureIndex.from_arrays(s.ids for s in train_sents)
    model = CrfModel.zeros(tags, feature_config, index, constrained)
    tag_id = {t: i for i, t in enumerate(model.tags)}
    for s in train_sents + dev_sents:
        s.X = index.matrix(s.indptr, s.ids)
        s.gold = [tag_id[t] for t in s.gold]

    optimizer = AdamW([model.weights, model.transitions], lr=config.learning_rate,
                      weight_decay=config.l2_penalty, masks=[None, model.allowed])
    rng = np.random.default_rng(config.seed)
    best_f1, best_state, stale = -1.0, None, 0
    history = []

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_sents))
        epoch_loss = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size), start=1):
            batch = [train_sents[i] for i in order[start:start + config.batch_size]]
            X = sp.vstack([s.X for s in batch], format="csr")
            em_all = np.asarray(X @ model.weights)
            trans = model.effective_transitions()
            d_em_all = np.empty_like(em_all)
            g_trans = np.zeros_like(model.transitions)
            batch_loss, row = 0.0, 0
            for s in batch:
                T = len(s.gold)
                loss, d_em, d_trans = nll_scores(em_all[row:row + T], trans, s.gold)
                d_em_all[row:row + T] = d_em
                g_trans += d_trans
                batch_loss += loss
                row += T
            if not math.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            n = len(batch)
            g_w = np.asarray(X.T @ d_em_all) / n
            g_trans = np.where(model.allowed, g_trans, 0.0) / n
            clip_grad_norm([g_w, g_trans], config.grad_clip_l2)
            optimizer.step([g_w, g_trans])
            epoch_loss += batch_loss

        dev_f1 = _entity_f1(model, dev_sents, dev_pairs)
        record = dict(epoch=epoch, loss=epoch_loss / len(train_sents), dev_f1=dev_f1)
        history.append(record)
        log.info("crf epoch %d loss %.4f dev F1 %.4f", epoch, record["loss"], dev_f1)
        if on_epoch:
            on_epoch(record)
        if dev_f1 > best_f1:
            best_f1, stale = dev_f1, 0
            best_state = (model.weights.copy(), model.transitions.copy())
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.weights, model.transitions = best_state
    model.history = history
    return model


def model_state(model: CrfModel) -> tuple[dict, dict]:
    meta = dict(tags=list(model.tags), feature_config=model.feature_config.to_dict(),
                history=model.history)
    arrays = dict(feature_ids=model.index.ids, weights=model.weights,
                  transitions=model.transitions, allowed=model.allowed)
    return meta, arrays


def model_from_state(meta: dict, arrays: dict) -> CrfModel:
    return CrfModel(tuple(meta["tags"]), FeatureConfig(**meta["feature_config"]),
                    FeatureIndex(arrays["feature_ids"]), arrays["weights"].astype(float),
                    arrays["transitions"].astype(float), arrays["allowed"].astype(bool),
                    list(meta.get("history", [])))
