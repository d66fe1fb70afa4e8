"""Structural and applicability checks for annotation sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .scheme import AnnotationSet, Entity, SchemeRegistry, entities_overlap

VIOLATION_KINDS = (
    "Overlap",
    "RelationHeadType",
    "RelationTailType",
    "AttributeApplicability",
    "SelfRelation",
    "DanglingReference",
    "SpanOutOfRange",
)


@dataclass(frozen=True, order=True)
class Violation:
    kind: str
    subject: tuple
    message: str

    def to_record(self, doc_id: str = "") -> dict:
        return {"doc_id": doc_id, "kind": self.kind, "subject": repr(self.subject), "message": self.message}


class ValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        head = "; ".join(v.message for v in violations[:3])
        more = f" (+{len(violations) - 3} more)" if len(violations) > 3 else ""
        super().__init__(f"{len(violations)} violation(s): {head}{more}")


def is_candidate_pair(head: Entity, tail: Entity, relation_type: str, scheme: SchemeRegistry) -> bool:
    return head != tail and scheme.relation_allows(relation_type, head.type, tail.type)


def validate(ann: AnnotationSet, scheme: SchemeRegistry) -> list[Violation]:
    """All violations in ``ann``, sorted; empty means clean."""
    out = []
    T = len(ann.doc.text)
    ents = sorted(ann.entities)

    for e in ents:
        if not scheme.has_entity(e.type):
            out.append(Violation("DanglingReference", e.as_tuple(), f"unknown entity type {e.type!r}"))
        if not 0 <= e.start < e.end <= T:
            out.append(Violation("SpanOutOfRange", e.as_tuple(),
                                 f"span ({e.start}, {e.end}) outside [0, {T}]"))

    by_start = sorted(ents, key=lambda e: (e.start, e.end, e.type))
    for i, a in enumerate(by_start):
        for b in by_start[i + 1:]:
            if b.start >= a.end:
                break
            if entities_overlap(a, b):
                out.append(Violation("Overlap", (a.as_tuple(), b.as_tuple()),
                                     f"entities {a.as_tuple()} and {b.as_tuple()} overlap"))

    known = ann.entities
    for r in sorted(ann.relations):
        subject = r.as_tuple()
        missing = [e for e in (r.head, r.tail) if e not in known]
        if missing:
            out.append(Violation("DanglingReference", subject,
                                 f"relation {r.type} references unannotated {missing[0].as_tuple()}"))
        if r.head == r.tail:
            out.append(Violation("SelfRelation", subject, f"relation {r.type} links an entity to itself"))
        if not scheme.has_relation(r.type):
            out.append(Violation("DanglingReference", subject, f"unknown relation type {r.type!r}"))
            continue
        rt = scheme.relation(r.type)
        if r.head.type not in rt.allowed_heads:
            out.append(Violation("RelationHeadType", subject,
                                 f"{r.head.type} cannot head {rt.name}"))
        if r.tail.type not in rt.allowed_tails:
            out.append(Violation("RelationTailType", subject,
                                 f"{r.tail.type} cannot be the tail of {rt.name}"))

    for a in sorted(ann.attributes):
        subject = a.as_tuple()
        if a.entity not in known:
            out.append(Violation("DanglingReference", subject,
                                 f"attribute {a.type} references unannotated {a.entity.as_tuple()}"))
        if not scheme.has_attribute(a.type):
            out.append(Violation("DanglingReference", subject, f"unknown attribute type {a.type!r}"))
            continue
        if not scheme.attribute_applies(a.type, a.entity.type):
            out.append(Violation("AttributeApplicability", subject,
                                 f"{a.type} is not applicable to {a.entity.type}"))
    return sorted(out)


def check(ann: AnnotationSet, scheme: SchemeRegistry, strict: bool = False) -> list[Violation]:
    """Validate; in strict mode any violation raises :class:`ValidationError`."""
    violations = validate(ann, scheme)
    if strict and violations:
        raise ValidationError(violations)
    return violations


def validate_all(anns: Iterable[AnnotationSet], scheme: SchemeRegistry) -> dict[str, list[Violation]]:
    return {a.doc.doc_id: validate(a, scheme) for a in anns}
