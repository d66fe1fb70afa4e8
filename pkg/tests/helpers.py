"""Shared oracles and random generators for the test suite.

The applicability tables below are transcribed by hand, independently of the
bundled scheme file, so scheme tests compare two separate encodings.
"""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from medie.scheme import AnnotationSet, Attribute, Document, Entity, Relation

FIXTURES = Path(__file__).parent / "fixtures"

SUPER = {
    "Disease": ["Disease or Syndrome", "Injury or Poisoning", "Organ Damage"],
    "Symptom": ["Self-Reported Abnormality", "Abnormal Test Result"],
    "Test": ["Test Process", "Test Result"],
    "Treatment": ["Treatment", "Operation", "Prevention", "Care"],
    "Drug": ["Drug", "Drug Dose"],
    "Body": ["Body Part", "Body Matter"],
    "Personal History": ["Personal History"],
    "Equipment": ["Equipment"],
    "Department": ["Department"],
}
SUBTYPES = [s for subs in SUPER.values() for s in subs]


def expand(*names: str) -> set[str]:
    out = set()
    for n in names:
        out.update(SUPER.get(n, [n]))
    return out


_DS = ("Disease", "Symptom")
_INFO_HEADS = ("Disease", "Symptom", "Test Process", "Test Result")
_INTERVENTION = ("Treatment", "Drug")

# relation -> (heads, tails), one entry per row of the relation table
RELATION_TABLE = {
    "Status–Cause–Information": (expand(*_DS, "Personal History"), expand(*_DS)),
    "Status–Require–Information": (expand(*_DS), expand("Test Process")),
    "Information–Suggest–Status": (expand(*_INFO_HEADS), expand(*_DS)),
    "Information–Exclude–Status": (expand(*_INFO_HEADS), expand(*_DS)),
    "Status–Require–Intervention": (expand(*_DS), expand(*_INTERVENTION)),
    "Intervention–Modify–Status": (expand(*_INTERVENTION), expand(*_DS)),
    "Intervention–Cause–Status": (expand(*_INTERVENTION), expand(*_DS)),
    "Intervention–Require–Information": (expand(*_INTERVENTION), expand("Test Process")),
    "Information–Permit–Intervention": (expand(*_INFO_HEADS), expand(*_INTERVENTION)),
    "Information–Contra–Intervention": (expand(*_INFO_HEADS), expand(*_INTERVENTION)),
}

_SRA, _ATR = "Self-Reported Abnormality", "Abnormal Test Result"
# attribute -> applicable subtypes, one entry per column of the attribute table
ATTRIBUTE_TABLE = {
    "Negation": expand("Disease", _SRA, "Test Process", "Treatment", "Drug", "Personal History"),
    "Family": expand("Disease"),
    "Analysis": expand("Disease", "Symptom", "Test", "Treatment", "Drug", "Body", "Personal History"),
    "Uncertainty": expand("Disease"),
    "Conditionality": {_SRA, _ATR},
    "Occasionality": {_SRA, _ATR},
    "Better": expand("Disease", "Symptom"),
    "Worse": expand("Disease", "Symptom"),
    "History": expand("Disease", "Symptom", "Test Process", "Treatment", "Drug"),
    "Future": expand("Disease", "Symptom", "Test Process", "Treatment", "Drug"),
}

ROLES = {
    "Status": expand("Disease", "Symptom", "Personal History"),
    "Information": expand("Disease", "Symptom", "Test Process", "Test Result"),
    "Intervention": expand("Treatment", "Drug"),
}


# -- brute-force CRF oracles --------------------------------------------------------

def brute_sequences(em: np.ndarray, trans: np.ndarray):
    """Yield ``(path, score)`` for every tag path; BEGIN = K, END = K + 1."""
    T, K = em.shape
    for path in itertools.product(range(K), repeat=T):
        s = trans[K, path[0]] + em[0, path[0]]
        for t in range(1, T):
            s += trans[path[t - 1], path[t]] + em[t, path[t]]
        s += trans[path[-1], K + 1]
        yield path, s


def brute_log_partition(em, trans) -> float:
    scores = np.array([s for _, s in brute_sequences(em, trans)])
    m = scores.max()
    if not np.isfinite(m):
        return -np.inf
    return float(m + np.log(np.sum(np.exp(scores - m))))


def brute_argmax(em, trans) -> tuple[list[int], float]:
    """Best path; ties go to the lexicographically smallest path."""
    best, best_score = None, -np.inf
    for path, s in brute_sequences(em, trans):
        if best is None or s > best_score:
            best, best_score = list(path), s
    return best, best_score


def random_crf_instance(rng, max_T=6, max_K=5, with_mask=False):
    T = int(rng.integers(1, max_T + 1))
    K = int(rng.integers(1, max_K + 1))
    em = rng.normal(size=(T, K))
    trans = rng.normal(size=(K + 2, K + 2))
    if with_mask:
        mask = rng.random((K + 2, K + 2)) < 0.2
        trans[mask] = -np.inf
    return em, trans


# -- random annotation sets ---------------------------------------------------------

CJK = "患者胸痛咳嗽发热头晕乏力血压心率肝肾功能正常未见异常腹部平软无压痛糖尿病高血压史"


def random_text(rng, n: int) -> str:
    alphabet = CJK + "abcXYZ0123，。、；"
    return "".join(alphabet[i] for i in rng.integers(len(alphabet), size=n))


def random_flat_entities(rng, T: int, types=SUBTYPES, max_n: int = 8) -> set[Entity]:
    """Random non-overlapping entities inside ``[0, T)``."""
    out, pos = set(), 0
    n = int(rng.integers(0, max_n + 1))
    for _ in range(n):
        if pos >= T:
            break
        start = pos + int(rng.integers(0, 4))
        if start >= T:
            break
        end = min(T, start + int(rng.integers(1, 5)))
        out.add(Entity(types[int(rng.integers(len(types)))], start, end))
        pos = end
    return out


def random_annotation_set(rng, scheme, doc_id: str = "d0", T: int | None = None,
                          valid: bool = True) -> AnnotationSet:
    """Random annotations; with ``valid`` every relation/attribute obeys the tables."""
    T = int(rng.integers(5, 60)) if T is None else T
    text = random_text(rng, T)
    entities = sorted(random_flat_entities(rng, T))
    relations, attributes = set(), set()
    for h in entities:
        for t in entities:
            if h == t or rng.random() > 0.3:
                continue
            allowed = scheme.allowed_relations(h.type, t.type) if valid else scheme.relation_names
            if allowed:
                relations.add(Relation(allowed[int(rng.integers(len(allowed)))], h, t))
    for e in entities:
        names = scheme.applicable_attributes(e.type) if valid else scheme.attribute_names
        for a in names:
            if rng.random() < 0.2:
                attributes.add(Attribute(a, e))
    doc = Document(doc_id, text)
    return AnnotationSet(doc, frozenset(entities), frozenset(relations), frozenset(attributes))


# -- high-precision CRF loss ----------------------------------------------------------

def mp_crf_loss(X, weights, transitions, allowed, gold, l2_penalty, digits=50):
    """CRF negative log-likelihood recomputed in ``digits``-digit arithmetic.

    ``weights`` and ``transitions`` may be object arrays holding mpmath
    numbers. Used as the reference for central finite differences: at this precision a
    tiny step gives derivatives accurate far beyond float64, so even gradients
    near zero can be compared by relative error.
    """
    import mpmath as mp

    with mp.workdps(digits):
        dense = X.toarray()
        T, K = dense.shape[0], weights.shape[1]
        W = [[mp.mpf(x) for x in row] for row in weights]
        em = [[mp.fsum(mp.mpf(float(dense[t, f])) * W[f][k] for f in np.flatnonzero(dense[t]))
               for k in range(K)] for t in range(T)]
        ninf = mp.mpf("-inf")
        tr = [[mp.mpf(transitions[i, j]) if allowed[i, j] else ninf for j in range(K + 2)]
              for i in range(K + 2)]

        def lse(xs):
            finite = [x for x in xs if x != ninf]
            if not finite:
                return ninf
            m = max(finite)
            return m + mp.log(mp.fsum(mp.exp(x - m) for x in finite))

        alpha = [tr[K][k] + em[0][k] for k in range(K)]
        for t in range(1, T):
            alpha = [lse([alpha[i] + tr[i][j] for i in range(K)]) + em[t][j] for j in range(K)]
        logz = lse([alpha[k] + tr[k][K + 1] for k in range(K)])
        gold_score = tr[K][gold[0]] + tr[gold[-1]][K + 1] + mp.fsum(em[t][gold[t]] for t in range(T))
        gold_score += mp.fsum(tr[gold[t - 1]][gold[t]] for t in range(1, T))
        l2 = mp.fsum(w * w for row in W for w in row)
        l2 += mp.fsum(tr[i][j] ** 2 for i in range(K + 2) for j in range(K + 2) if allowed[i, j])
        return logz - gold_score + mp.mpf(l2_penalty) / 2 * l2
