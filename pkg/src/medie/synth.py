"""Synthetic annotated corpus generator.

Documents are assembled from clause templates of four kinds:

* relation clauses ``[cue]HEAD TRIGGER TAIL[cue]`` where the trigger word is
  tied to the relation type,
* list clauses naming a few entities joined by separators, each optionally
  carrying an attribute cue immediately before or after it,
* distractor sentences with no entities; some contain cue words, so a cue on
  its own never implies an attribute,
* near-miss clauses placing a cue word a few characters from an entity that
  does not carry the attribute.

Gold annotations are produced alongside the text, so every generated document
passes validation by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .corpus import Corpus
from .scheme import (Attribute, AnnotationSet, Document, Entity, Relation, SchemeRegistry,
                     builtin_scheme)

# Characters that end a sentence; entity surfaces must not contain them so the
# entity tagger's sentence segmentation never cuts an entity.
_DELIMITERS = set("。！？；\n")

TEMPLATE_KINDS = ("relation", "list", "distractor", "near_miss")
_SLOT = re.compile(r"\{(\w+)\}")
_SLOTS = {"lead", "head", "trigger", "tail", "entity", "sep", "filler"}


def parse_template(template: str) -> list[tuple[str, str]]:
    """Split a template into ``("text", s)`` and ``("slot", name)`` pieces."""
    pieces, pos = [], 0
    for m in _SLOT.finditer(template):
        if m.start() > pos:
            pieces.append(("text", template[pos:m.start()]))
        if m.group(1) not in _SLOTS:
            raise ValueError(f"unknown slot {{{m.group(1)}}} in template {template!r}")
        pieces.append(("slot", m.group(1)))
        pos = m.end()
    if pos < len(template):
        pieces.append(("text", template[pos:]))
    if any(k == "text" and ("{" in v or "}" in v) for k, v in pieces):
        raise ValueError(f"unbalanced braces in template {template!r}")
    return pieces


def _check_template(kind: str, template: str):
    pieces = parse_template(template)
    slots = [v for k, v in pieces if k == "slot"]
    if kind == "relation":
        names = [v for k, v in pieces if k == "slot" and v in ("head", "trigger", "tail")]
        if names != ["head", "trigger", "tail"]:
            raise ValueError(f"relation template {template!r} needs {{head}}{{trigger}}{{tail}}")
        i = pieces.index(("slot", "head"))
        if pieces[i + 1:i + 3] != [("slot", "trigger"), ("slot", "tail")]:
            raise ValueError(f"relation template {template!r}: arguments must be adjacent to the trigger")
    elif {"head", "trigger", "tail"} & set(slots):
        raise ValueError(f"{kind} template {template!r} may not use relation slots")
    if kind == "distractor" and "entity" in slots:
        raise ValueError(f"distractor template {template!r} may not contain entities")
    if kind == "near_miss" and slots.count("entity") != 1:
        raise ValueError(f"near_miss template {template!r} needs exactly one {{entity}}")


@dataclass(frozen=True)
class GeneratorConfig:
    vocabulary: Mapping[str, tuple[str, ...]]
    triggers: Mapping[str, tuple[str, ...]]
    cues: Mapping[str, tuple[str, tuple[str, ...]]]  # attribute -> (position, words)
    templates: Mapping[str, tuple[str, ...]]  # kind -> template strings
    leads: tuple[str, ...] = ()
    distractors: tuple[str, ...] = ()
    separators: tuple[str, ...] = ("、",)
    departments: tuple[str, ...] = ("general",)
    sections: tuple[str, ...] = ("main",)
    n_records: int = 200
    docs_per_record: tuple[int, int] = (2, 2)
    clauses_per_doc: tuple[int, int] = (4, 6)
    # clause kind probabilities; list clauses take the remainder
    relation_rate: float = 0.6
    distractor_rate: float = 0.1
    near_miss_rate: float = 0.1
    attribute_rate: float = 0.4
    seed: int = 0

    def __post_init__(self):
        for name in ("docs_per_record", "clauses_per_doc"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 1 <= min <= max")
        rates = ("relation_rate", "distractor_rate", "near_miss_rate", "attribute_rate")
        for name in rates:
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.relation_rate + self.distractor_rate + self.near_miss_rate > 1:
            raise ValueError("clause kind rates must sum to at most 1")
        if self.n_records < 0:
            raise ValueError("n_records must be >= 0")
        for kind, templates in self.templates.items():
            if kind not in TEMPLATE_KINDS:
                raise ValueError(f"unknown template kind {kind!r}")
            for t in templates:
                _check_template(kind, t)
        if not self.templates.get("list"):
            raise ValueError("at least one list template is required")
        for subtype, words in self.vocabulary.items():
            for w in words:
                if not w or _DELIMITERS & set(w):
                    raise ValueError(f"bad surface {w!r} for {subtype}")
        for attr, (position, words) in self.cues.items():
            if position not in ("prefix", "suffix") or not words:
                raise ValueError(f"cue for {attr} needs a prefix/suffix position and words")

    def replace(self, **changes) -> "GeneratorConfig":
        return replace(self, **changes)

    def check_against(self, scheme: SchemeRegistry):
        """Raise ValueError if the tables do not cover the scheme."""
        missing = [t for t in scheme.entity_names if not self.vocabulary.get(t)]
        if missing:
            raise ValueError(f"no vocabulary for entity types {missing}")
        missing = [r for r in scheme.relation_names if not self.triggers.get(r)]
        if missing:
            raise ValueError(f"no trigger words for relation types {missing}")
        unknown = [a for a in self.cues if not scheme.has_attribute(a)]
        unknown += [t for t in self.vocabulary if not scheme.has_entity(t)]
        unknown += [r for r in self.triggers if not scheme.has_relation(r)]
        if unknown:
            raise ValueError(f"generator tables name unknown types {unknown}")


_TABLE_KEYS = {"leads", "distractors", "separators", "departments", "sections"}


def generator_config_from_dict(data: Mapping, **overrides) -> GeneratorConfig:
    kwargs = {}
    for key, value in data.items():
        if key == "vocabulary":
            kwargs[key] = {k: tuple(v) for k, v in value.items()}
        elif key in ("triggers", "templates"):
            kwargs[key] = {k: tuple(v) for k, v in value.items()}
        elif key == "cues":
            kwargs[key] = {k: (v["position"], tuple(v["words"])) for k, v in value.items()}
        elif key in _TABLE_KEYS:
            kwargs[key] = tuple(value)
        elif key in ("docs_per_record", "clauses_per_doc"):
            kwargs[key] = tuple(int(x) for x in value)
        elif key in GeneratorConfig.__dataclass_fields__:
            kwargs[key] = value
        else:
            raise ValueError(f"unknown generator setting {key!r}")
    kwargs.update(overrides)
    return GeneratorConfig(**kwargs)


def load_generator_config(path: str | Path | None = None, **overrides) -> GeneratorConfig:
    """Read generator tables from YAML; ``None`` selects the bundled tables."""
    if path is None:
        text = resources.files("medie").joinpath("data/generator.yaml").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return generator_config_from_dict(yaml.safe_load(text) or {}, **overrides)


class _DocBuilder:
    """Accumulates text and gold spans while clauses are appended."""

    def __init__(self):
        self.parts: list[str] = []
        self.length = 0
        self.entities: list[Entity] = []
        self.attributes: list[Attribute] = []
        self.relations: list[Relation] = []

    def text(self, s: str):
        self.parts.append(s)
        self.length += len(s)

    def entity(self, subtype: str, surface: str) -> Entity:
        e = Entity(subtype, self.length, self.length + len(surface))
        self.text(surface)
        self.entities.append(e)
        return e


class _Sampler:
    def __init__(self, config: GeneratorConfig, scheme: SchemeRegistry, rng: np.random.Generator):
        self.config = config
        self.scheme = scheme
        self.rng = rng

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def cue_for(self, subtype: str, position: str) -> tuple[str | None, str]:
        """Maybe choose an applicable attribute cued at ``position``."""
        if self.rng.random() >= self.config.attribute_rate:
            return None, ""
        options = [a for a in sorted(self.config.cues)
                   if self.config.cues[a][0] == position and self.scheme.attribute_applies(a, subtype)]
        if not options:
            return None, ""
        attr = self.pick(options)
        return attr, self.pick(self.config.cues[attr][1])

    def cued_entity(self, b: _DocBuilder, subtype: str, surface: str,
                    prefix: bool = True, suffix: bool = True) -> Entity:
        """Write ``[prefix cue]surface[suffix cue]`` and record gold."""
        pre_attr, pre = self.cue_for(subtype, "prefix") if prefix else (None, "")
        b.text(pre)
        e = b.entity(subtype, surface)
        suf_attr, suf = self.cue_for(subtype, "suffix") if suffix else (None, "")
        b.text(suf)
        for a in (pre_attr, suf_attr):
            if a:
                b.attributes.append(Attribute(a, e))
        return e

    def fill(self, b: _DocBuilder, template: str, relation: str | None = None,
             cues: bool = True):
        """Render one template into ``b``, recording gold for every slot."""
        head = head_word = None
        head_type = tail_type = None
        if relation is not None:
            rt = self.scheme.relation(relation)
            head_type = self.pick(sorted(rt.allowed_heads))
            tail_type = self.pick(sorted(rt.allowed_tails))
        for kind, value in parse_template(template):
            if kind == "text":
                b.text(value)
            elif value == "lead":
                if self.config.leads and self.rng.random() < 0.5:
                    b.text(self.pick(self.config.leads))
            elif value == "sep":
                b.text(self.pick(self.config.separators))
            elif value == "filler":
                b.text(self.pick(self.config.distractors))
            elif value == "trigger":
                b.text(self.pick(self.config.triggers[relation]))
            elif value == "head":
                # the head takes only a prefix cue and the tail only a suffix
                # cue, so the trigger always touches both arguments
                head_word = self.pick(self.config.vocabulary[head_type])
                head = self.cued_entity(b, head_type, head_word, suffix=False)
            elif value == "tail":
                words = [w for w in self.config.vocabulary[tail_type] if w != head_word] \
                    or list(self.config.vocabulary[tail_type])
                tail = self.cued_entity(b, tail_type, self.pick(words), prefix=False)
                b.relations.append(Relation(relation, head, tail))
            elif value == "entity":
                subtype = self.pick(list(self.config.vocabulary))
                self.cued_entity(b, subtype, self.pick(self.config.vocabulary[subtype]),
                                 prefix=cues, suffix=cues)

    def document(self, doc: Document) -> AnnotationSet:
        b = _DocBuilder()
        templates = self.config.templates
        lo, hi = self.config.clauses_per_doc
        unused = list(self.scheme.relation_names)
        c = self.config
        for _ in range(int(self.rng.integers(lo, hi + 1))):
            u = self.rng.random()
            if u < c.relation_rate and unused and templates.get("relation"):
                # each relation type at most once per document
                rel = unused.pop(int(self.rng.integers(len(unused))))
                self.fill(b, self.pick(templates["relation"]), relation=rel)
            elif u < c.relation_rate + c.distractor_rate and templates.get("distractor") \
                    and c.distractors:
                self.fill(b, self.pick(templates["distractor"]))
            elif u < c.relation_rate + c.distractor_rate + c.near_miss_rate \
                    and templates.get("near_miss"):
                self.fill(b, self.pick(templates["near_miss"]), cues=False)
            else:
                self.fill(b, self.pick(templates["list"]))
        doc = replace(doc, text="".join(b.parts))
        return AnnotationSet(doc, frozenset(b.entities), frozenset(b.relations),
                             frozenset(b.attributes))


def generate_document(config: GeneratorConfig, doc: Document, rng: np.random.Generator,
                      scheme: SchemeRegistry | None = None) -> AnnotationSet:
    return _Sampler(config, scheme or builtin_scheme(), rng).document(doc)


def generate(config: GeneratorConfig, scheme: SchemeRegistry | None = None) -> Corpus:
    """Generate ``config.n_records`` records.

    Each record and each document draws from its own generator seeded by
    ``(seed, record, doc)``, so any subset can be regenerated independently.
    """
    scheme = scheme or builtin_scheme()
    config.check_against(scheme)
    width = len(str(max(config.n_records - 1, 0)))
    docs = []
    for r in range(config.n_records):
        rec_rng = np.random.default_rng([config.seed, r])
        record_id = f"rec{r:0{width}d}"
        department = config.departments[int(rec_rng.integers(len(config.departments)))]
        lo, hi = config.docs_per_record
        n_docs = int(rec_rng.integers(lo, hi + 1))
        for d in range(n_docs):
            section = config.sections[d % len(config.sections)]
            doc = Document(f"{record_id}_{d}", "", record_id, section, department)
            rng = np.random.default_rng([config.seed, r, d])
            docs.append(_Sampler(config, scheme, rng).document(doc))
    return Corpus(docs)


def record_conditions(corpus: Corpus) -> list[dict]:
    """``record_id``/``department``/``condition`` rows for stratified sampling.

    The condition key is the surface of the first Disease or Syndrome entity in
    the record, or ``"none"``.
    """
    rows = []
    for record_id, anns in sorted(corpus.by_record().items()):
        condition = "none"
        for ann in sorted(anns, key=lambda a: a.doc.doc_id):
            diseases = sorted((e for e in ann.entities if e.type == "Disease or Syndrome"),
                              key=lambda e: e.start)
            if diseases:
                condition = ann.doc.text[diseases[0].start:diseases[0].end]
                break
        rows.append({"record_id": record_id, "department": anns[0].doc.department,
                     "condition": condition})
    return rows
