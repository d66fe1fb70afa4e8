import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medie.bio import (TagError, decode, encode, is_well_formed, read_columns, scheme_tags,
                       tag_inventory, write_columns)
from medie.scheme import Entity, builtin_scheme

from helpers import SUBTYPES, random_flat_entities

SRA, DOS, TP = "Self-Reported Abnormality", "Disease or Syndrome", "Test Process"


def brute_decode(tags):
    """Decode by enumerating every segmentation into runs and keeping the one the
    repair rule describes: a run starts at any B, at any I whose left
    neighbour is not the same type, and extends over following same-type I's."""
    best = None
    n = len(tags)
    for cuts in itertools.product([0, 1], repeat=max(n - 1, 0)):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        ents, ok = set(), True
        for s, e in zip(bounds, bounds[1:]):
            seg = tags[s:e]
            if all(t == "O" for t in seg):
                continue
            head = seg[0]
            if head == "O":
                ok = False
                break
            typ = head[2:]
            if any(t != f"I-{typ}" for t in seg[1:]):
                ok = False
                break
            # maximality: the run cannot be extended left
            if head.startswith("I-") and s > 0 and tags[s - 1] in (f"B-{typ}", f"I-{typ}"):
                ok = False
                break
            if e < n and tags[e] == f"I-{typ}":
                ok = False
                break
            ents.add(Entity(typ, s, e))
        if ok and any(t != "O" for t in tags) == bool(ents):
            if best is None or len(ents) < len(best):
                best = ents
    return best if best is not None else set()


class TestInventory:
    def test_scheme_tags(self):
        tags = scheme_tags(builtin_scheme())
        assert len(tags) == 37 and tags[0] == "O"
        assert set(tags[1:]) == {f"{p}-{s}" for s in SUBTYPES for p in "BI"}

    def test_order(self):
        assert tag_inventory(["X", "Y"]) == ("O", "B-X", "I-X", "B-Y", "I-Y")


class TestEncode:
    def test_single(self):
        assert encode({Entity(SRA, 2, 6)}, 8) == ["O", "O", f"B-{SRA}"] + [f"I-{SRA}"] * 3 + ["O", "O"]

    def test_empty(self):
        assert encode(set(), 5) == ["O"] * 5

    def test_adjacent(self):
        assert encode({Entity(DOS, 0, 2), Entity(TP, 2, 4)}, 4) == [f"B-{DOS}", f"I-{DOS}", f"B-{TP}", f"I-{TP}"]

    def test_overlap_rejected(self):
        with pytest.raises(TagError):
            encode({Entity(DOS, 0, 3), Entity(TP, 2, 4)}, 5)

    def test_out_of_range_rejected(self):
        with pytest.raises(TagError):
            encode({Entity(DOS, 3, 6)}, 5)


class TestDecode:
    def test_simple(self):
        assert decode(["O", f"B-{DOS}", f"I-{DOS}", "O"]) == {Entity(DOS, 1, 3)}

    def test_leading_inside_repaired(self):
        assert decode(["O", f"I-{DOS}", f"I-{DOS}", "O"]) == {Entity(DOS, 1, 3)}

    def test_type_switch(self):
        assert decode([f"B-{DOS}", f"I-{TP}"]) == {Entity(DOS, 0, 1), Entity(TP, 1, 2)}

    def test_b_after_b(self):
        assert decode([f"B-{DOS}", f"B-{DOS}"]) == {Entity(DOS, 0, 1), Entity(DOS, 1, 2)}

    def test_unknown_tags_are_outside(self):
        assert decode(["X", "B-", f"B-{DOS}"]) == {Entity(DOS, 2, 3)}

    def test_matches_brute_force_on_all_short_sequences(self):
        alphabet = ["O", "B-a", "I-a", "B-b", "I-b"]
        for n in range(1, 6):
            for tags in itertools.product(alphabet, repeat=n):
                assert decode(list(tags)) == brute_decode(list(tags)), tags

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.sampled_from(["O", "B-a", "I-a", "B-b", "I-b", "junk"]), max_size=30))
    def test_total_and_flat(self, tags):
        ents = sorted(decode(tags), key=lambda e: e.start)
        for a, b in zip(ents, ents[1:]):
            assert a.end <= b.start
        assert all(0 <= e.start < e.end <= len(tags) for e in ents)


class TestRoundTrip:
    def test_random_sets(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            T = int(rng.integers(1, 40))
            ents = random_flat_entities(rng, T)
            tags = encode(ents, T)
            assert is_well_formed(tags)
            assert decode(tags) == ents

    def test_well_formed(self):
        assert is_well_formed(["O", "B-a", "I-a"])
        assert not is_well_formed(["O", "I-a"])
        assert not is_well_formed(["B-a", "I-b"])


class TestColumns:
    def test_round_trip_with_control_characters(self):
        seqs = [("a\tb", ["O", "B-x", "I-x"]), ("换\n行\\", ["O"] * 4), ("患者", ["B-y", "I-y"])]
        payload = write_columns(seqs)
        assert read_columns(payload) == [(t, list(g)) for t, g in seqs]

    def test_layout(self):
        assert write_columns([("ab", ["O", "B-x"]), ("c", ["O"])]) == "a\tO\nb\tB-x\n\nc\tO\n"

    def test_bad_line(self):
        with pytest.raises(TagError):
            read_columns("ab\tO\n")
