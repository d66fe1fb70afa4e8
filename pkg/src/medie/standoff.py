"""Standoff (BRAT-style) annotation files.

Line kinds understood by :func:`parse_standoff`::

    T1<TAB>Type start end<TAB>surface        entity
    R1<TAB>Type Arg1:T1 Arg2:T2              relation (args may name groups)
    A1<TAB>Type T1                           attribute on an entity
    A2<TAB>Outcome R1 Improve                qualifier on a relation
    *<TAB>Group G1 T1 T2 ...                 entity group membership
    #1<TAB>AnnotatorNotes T1<TAB>...         ignored

A relation whose argument is a group applies to every (head, tail) pair drawn
from the two groups; it is expanded to entity-level relations while parsing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .scheme import (AnnotationSet, Attribute, Document, Entity, Relation,
                     SchemeError, SchemeRegistry)

OUTCOME_ATTRIBUTE = "Outcome"

_ID = re.compile(r"^[TRAG]\d+$")


class StandoffError(ValueError):
    """A standoff payload could not be parsed.

    ``kind`` is one of ``malformed``, ``reference``, ``offset``, ``type``.
    """

    def __init__(self, kind: str, line_no: int, message: str, source: str | None = None):
        self.kind = kind
        self.line_no = line_no
        self.source = source
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line_no}: {message}")


@dataclass(frozen=True)
class EntityGroup:
    group_id: str
    members: frozenset

    def __post_init__(self):
        if not self.members:
            raise ValueError(f"group {self.group_id} has no members")


def expand_groups(relations_on_groups: Iterable[tuple]) -> set[Relation]:
    """Entity-level relations for (type, head group, tail group) triples.

    Groups may be :class:`EntityGroup` objects or plain iterables of entities.
    Self-pairs arising from overlapping groups are dropped.
    """
    out = set()
    for rel_type, head_group, tail_group in relations_on_groups:
        heads = head_group.members if isinstance(head_group, EntityGroup) else head_group
        tails = tail_group.members if isinstance(tail_group, EntityGroup) else tail_group
        for h in heads:
            for t in tails:
                if h != t:
                    out.add(Relation(rel_type, h, t))
    return out


def _split_tab(line: str, expected: int, line_no: int, source):
    parts = line.split("\t")
    if len(parts) < expected:
        raise StandoffError("malformed", line_no, f"expected {expected} tab-separated fields: {line!r}", source)
    return parts


def parse_standoff(text_payload: str, ann_payload: str, scheme: SchemeRegistry,
                   doc: Document | None = None, source: str | None = None
                   ) -> tuple[AnnotationSet, list[EntityGroup]]:
    """Parse an annotation payload against its document text."""
    if doc is None:
        doc = Document(doc_id=source or "doc", text=text_payload)
    n = len(text_payload)

    entities: dict[str, Entity] = {}
    groups: dict[str, EntityGroup] = {}
    pending_rel = []   # (line_no, rid, type, arg1, arg2)
    pending_attr = []  # (line_no, aid, type, target, value)
    seen_ids = set()

    for line_no, raw in enumerate(ann_payload.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        kind = line[0]
        if kind == "#":
            continue
        if kind == "*":
            fields = _split_tab(line, 2, line_no, source)[1].split()
            if len(fields) < 3 or fields[0] != "Group" or not fields[1].startswith("G"):
                raise StandoffError("malformed", line_no, f"bad group line: {line!r}", source)
            gid, member_ids = fields[1], fields[2:]
            if gid in groups:
                raise StandoffError("malformed", line_no, f"duplicate group id {gid}", source)
            members = []
            for mid in member_ids:
                if mid not in entities:
                    raise StandoffError("reference", line_no, f"group {gid} references unknown {mid}", source)
                members.append(entities[mid])
            groups[gid] = EntityGroup(gid, frozenset(members))
            continue

        parts = _split_tab(line, 2, line_no, source)
        ident = parts[0]
        if not _ID.match(ident) or ident[0] == "G":
            raise StandoffError("malformed", line_no, f"unsupported line kind {ident!r}", source)
        if ident in seen_ids:
            raise StandoffError("malformed", line_no, f"duplicate identifier {ident}", source)
        seen_ids.add(ident)

        if kind == "T":
            parts = _split_tab(line, 3, line_no, source)
            try:
                type_name, start_s, end_s = parts[1].rsplit(" ", 2)
                start, end = int(start_s), int(end_s)
            except ValueError:
                raise StandoffError("malformed", line_no, f"bad entity span {parts[1]!r}", source) from None
            if not scheme.has_entity(type_name):
                raise StandoffError("type", line_no, f"entity type {type_name!r} not in scheme", source)
            if not 0 <= start < end <= n:
                raise StandoffError("offset", line_no, f"span ({start}, {end}) outside text of length {n}", source)
            entities[ident] = Entity(scheme.entity(type_name).name, start, end)
        elif kind == "R":
            fields = parts[1].split()
            if len(fields) != 3 or not fields[1].startswith("Arg1:") or not fields[2].startswith("Arg2:"):
                raise StandoffError("malformed", line_no, f"bad relation line: {line!r}", source)
            if not scheme.has_relation(fields[0]):
                raise StandoffError("type", line_no, f"relation type {fields[0]!r} not in scheme", source)
            pending_rel.append((line_no, ident, scheme.relation(fields[0]).name, fields[1][5:], fields[2][5:]))
        elif kind == "A":
            fields = parts[1].split()
            if len(fields) not in (2, 3):
                raise StandoffError("malformed", line_no, f"bad attribute line: {line!r}", source)
            value = fields[2] if len(fields) == 3 else None
            pending_attr.append((line_no, ident, fields[0], fields[1], value))

    def resolve(ref, line_no):
        if ref in entities:
            return [entities[ref]]
        if ref in groups:
            return sorted(groups[ref].members)
        raise StandoffError("reference", line_no, f"unresolvable reference {ref}", source)

    relations: dict[str, list[Relation]] = {}
    for line_no, rid, rtype, a1, a2 in pending_rel:
        relations[rid] = sorted(expand_groups([(rtype, resolve(a1, line_no), resolve(a2, line_no))]))

    attributes = set()
    outcomes: dict[str, str] = {}
    for line_no, aid, atype, target, value in pending_attr:
        if atype == OUTCOME_ATTRIBUTE:
            if target not in relations:
                raise StandoffError("reference", line_no, f"unresolvable relation {target}", source)
            if value is None:
                raise StandoffError("malformed", line_no, "outcome qualifier needs a value", source)
            outcomes[target] = value
            continue
        if value is not None:
            raise StandoffError("malformed", line_no, f"unexpected attribute value {value!r}", source)
        if not scheme.has_attribute(atype):
            raise StandoffError("type", line_no, f"attribute type {atype!r} not in scheme", source)
        if target not in entities:
            raise StandoffError("reference", line_no, f"unresolvable entity {target}", source)
        attributes.add(Attribute(scheme.attribute(atype).name, entities[target]))

    rel_set = set()
    for rid, rels in relations.items():
        outcome = outcomes.get(rid)
        for r in rels:
            rel_set.add(Relation(r.type, r.head, r.tail, outcome) if outcome else r)

    ann = AnnotationSet(doc, frozenset(entities.values()), frozenset(rel_set), frozenset(attributes))
    return ann, sorted(groups.values(), key=lambda g: g.group_id)


def _entity_key(e: Entity):
    return (e.start, e.end, e.type)


def serialize_standoff(ann: AnnotationSet, scheme: SchemeRegistry | None = None) -> str:
    """Canonical standoff payload for an annotation set.

    Entities are numbered by (start, end, type); relations by (head, tail,
    type); attributes by (entity, type). Type names use the scheme's file
    names when a scheme is given, otherwise spaces become hyphens.
    """
    def ename(name):
        if scheme is not None:
            return scheme.entity(name).file_name
        return name.replace(" ", "-")

    def rname(name):
        if scheme is not None:
            return scheme.relation(name).file_name
        return name.replace("–", "-").replace(" ", "-")

    def aname(name):
        return scheme.attribute(name).file_name if scheme is not None else name.replace(" ", "-")

    text = ann.doc.text
    lines = []
    ids: dict[Entity, str] = {}
    for i, e in enumerate(sorted(ann.entities, key=_entity_key), start=1):
        ids[e] = f"T{i}"
        lines.append(f"T{i}\t{ename(e.type)} {e.start} {e.end}\t{_surface(text, e)}")

    rels = sorted(ann.relations, key=lambda r: (_entity_key(r.head), _entity_key(r.tail), r.type))
    rel_ids = {}
    for i, r in enumerate(rels, start=1):
        rel_ids[r] = f"R{i}"
        lines.append(f"R{i}\t{rname(r.type)} Arg1:{ids[r.head]} Arg2:{ids[r.tail]}")

    attrs = sorted(ann.attributes, key=lambda a: (_entity_key(a.entity), a.type))
    k = 0
    for k, a in enumerate(attrs, start=1):
        lines.append(f"A{k}\t{aname(a.type)} {ids[a.entity]}")
    for r in rels:
        if r.outcome:
            k += 1
            lines.append(f"A{k}\t{OUTCOME_ATTRIBUTE} {rel_ids[r]} {r.outcome}")
    return "\n".join(lines) + "\n" if lines else ""


def _surface(text: str, e: Entity) -> str:
    # Line structure must survive; the surface column is informational only.
    return text[e.start:e.end].replace("\n", " ").replace("\t", " ").replace("\r", " ")


__all__ = ["EntityGroup", "StandoffError", "expand_groups", "parse_standoff",
           "serialize_standoff", "SchemeError"]
