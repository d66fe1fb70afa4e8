"""Annotation data model and the entity/relation/attribute type system.

Spans are character offsets, end-exclusive: ``0 <= start < end <= len(text)``.
Entity, relation and attribute types are referred to by name (``str``); the
:class:`SchemeRegistry` owns their definitions and applicability tables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import yaml

ROLES = ("Status", "Information", "Intervention")


class SchemeError(ValueError):
    """Raised for malformed scheme files or unknown type names."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    record_id: str = ""
    section: str = ""
    department: str = ""

    def __post_init__(self):
        if not self.record_id:
            object.__setattr__(self, "record_id", self.doc_id)

    def __len__(self) -> int:
        return len(self.text)


@dataclass(frozen=True, order=True)
class Entity:
    type: str
    start: int
    end: int

    def as_tuple(self) -> tuple:
        return (self.type, self.start, self.end)

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, order=True)
class Relation:
    type: str
    head: Entity
    tail: Entity
    # Optional qualifier (e.g. Improve/Worsen for Intervention–Modify–Status);
    # metadata only, never part of identity or scoring.
    outcome: str | None = field(default=None, compare=False)

    def as_tuple(self) -> tuple:
        return (self.type, self.head.as_tuple(), self.tail.as_tuple())


@dataclass(frozen=True, order=True)
class Attribute:
    type: str
    entity: Entity

    def as_tuple(self) -> tuple:
        return (self.type, self.entity.as_tuple())


@dataclass(frozen=True)
class AnnotationSet:
    """Entities, relations and attributes over one document."""

    doc: Document
    entities: frozenset = frozenset()
    relations: frozenset = frozenset()
    attributes: frozenset = frozenset()

    def __post_init__(self):
        for name in ("entities", "relations", "attributes"):
            value = getattr(self, name)
            if not isinstance(value, frozenset):
                object.__setattr__(self, name, frozenset(value))

    @property
    def is_empty(self) -> bool:
        return not (self.entities or self.relations or self.attributes)

    def replace(self, **changes) -> "AnnotationSet":
        kwargs = dict(doc=self.doc, entities=self.entities,
                      relations=self.relations, attributes=self.attributes)
        kwargs.update(changes)
        return AnnotationSet(**kwargs)

    def attributes_of(self, entity: Entity) -> set[str]:
        return {a.type for a in self.attributes if a.entity == entity}


def entities_overlap(a: Entity, b: Entity) -> bool:
    return a.start < b.end and b.start < a.end


@dataclass(frozen=True)
class EntityType:
    name: str
    super_type: str
    file_name: str


@dataclass(frozen=True)
class RelationType:
    name: str
    file_name: str
    allowed_heads: frozenset
    allowed_tails: frozenset
    qualifiers: tuple = ()


@dataclass(frozen=True)
class AttributeType:
    name: str
    file_name: str
    applicable_to: frozenset


def _file_name(name: str) -> str:
    return re.sub(r"\s+", "-", name.replace("–", "-"))


def _relation_key(name: str) -> str:
    return re.sub(r"-+|–", "-", name).strip()


class SchemeRegistry:
    """Type inventories, the role map and both applicability tables.

    Lookups by name accept the display name or the standoff file name.
    """

    def __init__(self, entity_types: Iterable[EntityType],
                 relation_types: Iterable[RelationType],
                 attribute_types: Iterable[AttributeType],
                 role_map: Mapping[str, frozenset]):
        self.entity_types = tuple(entity_types)
        self.relation_types = tuple(relation_types)
        self.attribute_types = tuple(attribute_types)
        self.role_map = dict(role_map)

        self._entity = {}
        for et in self.entity_types:
            self._entity[et.name] = et
            self._entity[et.file_name] = et
        self._relation = {}
        for rt in self.relation_types:
            self._relation[rt.name] = rt
            self._relation[_relation_key(rt.name)] = rt
            self._relation[rt.file_name] = rt
        self._attribute = {}
        for at in self.attribute_types:
            self._attribute[at.name] = at
            self._attribute[at.file_name] = at

        names = {et.name for et in self.entity_types}
        self._pair_table = {}
        for h in names:
            for t in names:
                allowed = tuple(rt.name for rt in self.relation_types
                                if h in rt.allowed_heads and t in rt.allowed_tails)
                if allowed:
                    self._pair_table[(h, t)] = allowed
        for rt in self.relation_types:
            unknown = (rt.allowed_heads | rt.allowed_tails) - names
            if unknown:
                raise SchemeError(f"relation {rt.name!r} references unknown types {sorted(unknown)}")
        for at in self.attribute_types:
            unknown = at.applicable_to - names
            if unknown:
                raise SchemeError(f"attribute {at.name!r} references unknown types {sorted(unknown)}")

    # -- lookups -----------------------------------------------------------
    def entity(self, name: str) -> EntityType:
        try:
            return self._entity[name]
        except KeyError:
            raise SchemeError(f"unknown entity type {name!r}") from None

    def relation(self, name: str) -> RelationType:
        rt = self._relation.get(name) or self._relation.get(_relation_key(name))
        if rt is None:
            raise SchemeError(f"unknown relation type {name!r}")
        return rt

    def attribute(self, name: str) -> AttributeType:
        try:
            return self._attribute[name]
        except KeyError:
            raise SchemeError(f"unknown attribute type {name!r}") from None

    def has_entity(self, name: str) -> bool:
        return name in self._entity

    def has_relation(self, name: str) -> bool:
        return name in self._relation or _relation_key(name) in self._relation

    def has_attribute(self, name: str) -> bool:
        return name in self._attribute

    @property
    def entity_names(self) -> tuple[str, ...]:
        return tuple(et.name for et in self.entity_types)

    @property
    def relation_names(self) -> tuple[str, ...]:
        return tuple(rt.name for rt in self.relation_types)

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(at.name for at in self.attribute_types)

    @property
    def super_types(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(et.super_type for et in self.entity_types))

    def subtypes_of(self, super_type: str) -> tuple[str, ...]:
        return tuple(et.name for et in self.entity_types if et.super_type == super_type)

    # -- applicability -----------------------------------------------------
    def allowed_relations(self, head_type: str, tail_type: str) -> tuple[str, ...]:
        """Relation types (in scheme order) permitted between two entity types."""
        return self._pair_table.get((head_type, tail_type), ())

    def relation_allows(self, relation: str, head_type: str, tail_type: str) -> bool:
        rt = self.relation(relation)
        return head_type in rt.allowed_heads and tail_type in rt.allowed_tails

    def attribute_applies(self, attribute: str, entity_type: str) -> bool:
        return entity_type in self.attribute(attribute).applicable_to

    def applicable_attributes(self, entity_type: str) -> tuple[str, ...]:
        return tuple(at.name for at in self.attribute_types if entity_type in at.applicable_to)

    def __repr__(self):
        return (f"SchemeRegistry({len(self.entity_types)} entity, {len(self.relation_types)} relation, "
                f"{len(self.attribute_types)} attribute types)")


def _expand(names, supers: Mapping[str, list[str]], leaves: set[str], where: str) -> frozenset:
    out = set()
    for name in names:
        if name in supers:
            out.update(supers[name])
        elif name in leaves:
            out.add(name)
        else:
            raise SchemeError(f"{where}: unknown entity type {name!r}")
    return frozenset(out)


def scheme_from_dict(data: Mapping) -> SchemeRegistry:
    """Build a registry from the parsed declarative scheme mapping."""
    try:
        supers: dict[str, list[str]] = {}
        entity_types = []
        for block in data["entity_types"]:
            sup = block["super"]
            subs = []
            for sub in block["subtypes"]:
                if isinstance(sub, str):
                    sub = {"name": sub}
                name = sub["name"]
                entity_types.append(EntityType(name, sup, sub.get("file_name") or _file_name(name)))
                subs.append(name)
            supers[sup] = subs
        leaves = {et.name for et in entity_types}
        if len(leaves) != len(entity_types):
            raise SchemeError("duplicate entity subtype names")

        role_map: dict[str, set] = {name: set() for name in leaves}
        for role, members in (data.get("roles") or {}).items():
            for name in _expand(members, supers, leaves, f"role {role}"):
                role_map[name].add(role)

        qualifiers = data.get("relation_qualifiers") or {}
        relation_types = []
        for rel in data["relation_types"]:
            name = rel["name"]
            relation_types.append(RelationType(
                name=name,
                file_name=rel.get("file_name") or _file_name(name),
                allowed_heads=_expand(rel["heads"], supers, leaves, f"relation {name}"),
                allowed_tails=_expand(rel["tails"], supers, leaves, f"relation {name}"),
                qualifiers=tuple(qualifiers.get(name, ())),
            ))
        attribute_types = []
        for attr in data["attribute_types"]:
            name = attr["name"]
            attribute_types.append(AttributeType(
                name=name,
                file_name=attr.get("file_name") or _file_name(name),
                applicable_to=_expand(attr["applicable_to"], supers, leaves, f"attribute {name}"),
            ))
    except (KeyError, TypeError) as exc:
        raise SchemeError(f"malformed scheme: {exc!r}") from exc

    return SchemeRegistry(entity_types, relation_types, attribute_types,
                          {k: frozenset(v) for k, v in role_map.items()})


def load_scheme(path: str | Path) -> SchemeRegistry:
    with open(path, encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise SchemeError(f"{path}: {exc}") from exc
    return scheme_from_dict(data)


@lru_cache(maxsize=1)
def builtin_scheme() -> SchemeRegistry:
    """The bundled 18/10/10 medical scheme."""
    text = resources.files("medie").joinpath("data/scheme.yaml").read_text(encoding="utf-8")
    return scheme_from_dict(yaml.safe_load(text))


def resolve_scheme(path: str | Path | None) -> SchemeRegistry:
    return builtin_scheme() if path in (None, "", "builtin") else load_scheme(path)
