"""BIO2 tagging: entity sets <-> per-character tag sequences."""

from __future__ import annotations

from typing import Iterable, Sequence

from .scheme import Entity, SchemeRegistry

OUTSIDE = "O"


class TagError(ValueError):
    pass


def tag_inventory(entity_types: Iterable[str]) -> tuple[str, ...]:
    """``O`` first, then ``B-x``, ``I-x`` per entity type in the given order."""
    tags = [OUTSIDE]
    for t in entity_types:
        tags += [f"B-{t}", f"I-{t}"]
    return tuple(tags)


def scheme_tags(scheme: SchemeRegistry) -> tuple[str, ...]:
    return tag_inventory(scheme.entity_names)


def encode(entities: Iterable[Entity], length: int) -> list[str]:
    tags = [OUTSIDE] * length
    for e in sorted(entities, key=lambda e: (e.start, e.end)):
        if not 0 <= e.start < e.end <= length:
            raise TagError(f"entity {e.as_tuple()} outside sequence of length {length}")
        if any(tags[i] != OUTSIDE for i in range(e.start, e.end)):
            raise TagError(f"entity {e.as_tuple()} overlaps another entity")
        tags[e.start] = f"B-{e.type}"
        for i in range(e.start + 1, e.end):
            tags[i] = f"I-{e.type}"
    return tags


def _split(tag: str) -> tuple[str, str | None]:
    if tag == OUTSIDE or len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
        return OUTSIDE, None
    return tag[0], tag[2:]


def decode(tags: Sequence[str]) -> set[Entity]:
    """Maximal B-I* runs as entities.

    Total on arbitrary input: an ``I-x`` not preceded by ``B-x``/``I-x`` opens a
    new entity; unrecognised tags act as ``O``.
    """
    out = set()
    cur_type, cur_start = None, 0
    for i, tag in enumerate(tags):
        prefix, typ = _split(tag)
        if prefix == "I" and typ == cur_type:
            continue
        if cur_type is not None:
            out.add(Entity(cur_type, cur_start, i))
            cur_type = None
        if prefix in ("B", "I"):
            cur_type, cur_start = typ, i
    if cur_type is not None:
        out.add(Entity(cur_type, cur_start, len(tags)))
    return out


def is_well_formed(tags: Sequence[str]) -> bool:
    prev = None
    for tag in tags:
        prefix, typ = _split(tag)
        if prefix == "I" and prev != typ:
            return False
        prev = typ if prefix in ("B", "I") else None
    return True


_ESCAPES = {"\n": "\\n", "\t": "\\t", "\r": "\\r", "\\": "\\\\"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


def write_columns(sequences: Iterable[tuple[str, Sequence[str]]]) -> str:
    """Column dump: ``char<TAB>tag`` per line, a blank line between sequences.

    Newline, tab, carriage return and backslash characters are written as
    two-character escapes (``\\n`` etc.).
    """
    blocks = []
    for text, tags in sequences:
        if len(text) != len(tags):
            raise TagError("text and tags differ in length")
        blocks.append("".join(f"{_ESCAPES.get(c, c)}\t{t}\n" for c, t in zip(text, tags)))
    return "\n".join(blocks)


def read_columns(payload: str) -> list[tuple[str, list[str]]]:
    out = []
    chars, tags = [], []
    for line_no, line in enumerate(payload.split("\n"), start=1):
        if line == "":
            if chars:
                out.append(("".join(chars), tags))
                chars, tags = [], []
            continue
        char, sep, tag = line.partition("\t")
        char = _UNESCAPES.get(char, char)
        if not sep or len(char) != 1:
            raise TagError(f"line {line_no}: expected 'char<TAB>tag'")
        chars.append(char)
        tags.append(tag)
    if chars:
        out.append(("".join(chars), tags))
    return out
