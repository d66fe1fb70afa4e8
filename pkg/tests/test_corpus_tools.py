import numpy as np
import pytest

from medie.corpus import Corpus, read_corpus, write_corpus
from medie.sampling import SamplingConfig, split, split_sizes, stratified_sample
from medie.scheme import builtin_scheme
from medie.synth import (GeneratorConfig, generate, load_generator_config, parse_template,
                         record_conditions)
from medie.validate import validate

SCHEME = builtin_scheme()


class TestStratifiedSample:
    def test_distinct_conditions_with_cap_one(self):
        records = [(f"r{i}", "cardio", f"c{i}") for i in range(10)]
        got = stratified_sample(records, SamplingConfig(quota=5, cap=1))
        conds = {dict((r, c) for r, _, c in records)[x] for x in got}
        assert len(got) == 5 and len(conds) == 5

    def test_cap_limits_one_condition(self):
        records = [(f"r{i:03d}", "cardio", "flu") for i in range(100)]
        assert len(stratified_sample(records, SamplingConfig(quota=50, cap=2))) == 2

    def test_two_departments(self):
        records = [(f"a{i}", "A", f"c{i}") for i in range(8)] + [(f"b{i}", "B", f"c{i}") for i in range(8)]
        got = stratified_sample(records, SamplingConfig(quota=3, cap=2))
        assert sum(x.startswith("a") for x in got) == 3 and sum(x.startswith("b") for x in got) == 3

    def test_per_department_quota(self):
        records = [{"record_id": f"a{i}", "department": "A", "condition": f"c{i}"} for i in range(8)]
        assert len(stratified_sample(records, SamplingConfig(quota=3, quotas={"A": 6}))) == 6

    def test_short_supply(self):
        records = [("r1", "A", "x"), ("r2", "A", "y")]
        assert stratified_sample(records, SamplingConfig(quota=5)) == ["r1", "r2"]

    def test_permutation_invariant_and_seeded(self):
        rng = np.random.default_rng(0)
        records = [(f"r{i:03d}", f"d{i % 4}", f"c{int(rng.integers(6))}") for i in range(120)]
        cfg = SamplingConfig(quota=7, cap=2, seed=9)
        base = stratified_sample(records, cfg)
        for _ in range(5):
            shuffled = [records[i] for i in rng.permutation(len(records))]
            assert stratified_sample(shuffled, cfg) == base
        assert stratified_sample(records, SamplingConfig(quota=7, cap=2, seed=10)) != base

    def test_cap_never_exceeded(self):
        rng = np.random.default_rng(1)
        records = [(f"r{i:03d}", f"d{i % 3}", f"c{int(rng.integers(4))}") for i in range(90)]
        got = set(stratified_sample(records, SamplingConfig(quota=20, cap=2)))
        counts = {}
        for r, d, c in records:
            if r in got:
                counts[(d, c)] = counts.get((d, c), 0) + 1
        assert max(counts.values()) <= 2

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SamplingConfig(quota=0)
        with pytest.raises(ValueError):
            SamplingConfig(cap=0)


class TestSplit:
    def test_three_hundred_one_hundred_one_hundred(self):
        ids = [f"r{i:03d}" for i in range(500)]
        train, dev, test = split(ids, counts=(300, 100, 100))
        assert (len(train), len(dev), len(test)) == (300, 100, 100)
        assert not (set(train) & set(dev) or set(train) & set(test) or set(dev) & set(test))

    def test_default_for_500(self):
        assert split_sizes(500) == (300, 100, 100)

    def test_ratios_on_ten(self):
        assert split_sizes(10, ratios=(0.6, 0.2, 0.2)) == (6, 2, 2)

    def test_largest_remainder(self):
        assert split_sizes(7, ratios=(0.6, 0.2, 0.2)) == (4, 2, 1)
        assert sum(split_sizes(11)) == 11

    def test_insufficient_records(self):
        with pytest.raises(ValueError, match="needs 6 records"):
            split_sizes(5, counts=(4, 1, 1))

    def test_deterministic_and_order_free(self):
        ids = [f"r{i}" for i in range(50)]
        assert split(ids, seed=3) == split(list(reversed(ids)), seed=3)
        assert split(ids, seed=3) != split(ids, seed=4)


class TestTemplates:
    def test_parse(self):
        assert parse_template("{lead}{head}{trigger}{tail}。") == [
            ("slot", "lead"), ("slot", "head"), ("slot", "trigger"), ("slot", "tail"), ("text", "。")]

    @pytest.mark.parametrize("kind,template", [
        ("relation", "{head}和{tail}"),
        ("relation", "{tail}{trigger}{head}"),
        ("distractor", "{entity}。"),
        ("near_miss", "{entity}{entity}"),
        ("list", "{nonsense}"),
    ])
    def test_malformed_rejected(self, kind, template):
        base = load_generator_config()
        templates = dict(base.templates)
        templates[kind] = (template,)
        with pytest.raises(ValueError):
            base.replace(templates=templates)


class TestGenerator:
    def test_zero_records(self):
        assert len(generate(load_generator_config(n_records=0))) == 0

    def test_thousand_docs_are_clean(self):
        corpus = generate(load_generator_config(n_records=500, seed=4))
        assert len(corpus) == 1000
        for ann in corpus:
            assert validate(ann, SCHEME) == []
            for x in ann.attributes:
                assert x.type in SCHEME.applicable_attributes(x.entity.type)
            assert not any(x.type == "Negation" and x.entity.type == "Test Result" for x in ann.attributes)

    def test_covers_all_types(self):
        corpus = generate(load_generator_config(n_records=200))
        ents = {e.type for a in corpus for e in a.entities}
        rels = {r.type for a in corpus for r in a.relations}
        attrs = {x.type for a in corpus for x in a.attributes}
        assert rels == set(SCHEME.relation_names)
        assert attrs == set(SCHEME.attribute_names)
        assert len(ents) >= 16

    def test_surfaces_come_from_vocabulary(self):
        cfg = load_generator_config(n_records=20)
        for ann in generate(cfg):
            for e in ann.entities:
                assert ann.doc.text[e.start:e.end] in cfg.vocabulary[e.type]

    def test_records_regenerate_independently(self):
        small = generate(load_generator_config(n_records=5, seed=2))
        large = generate(load_generator_config(n_records=9, seed=2))
        # ids are zero-padded to the same width for both sizes, so the first five records coincide
        assert small.docs == large.docs[:len(small.docs)]

    def test_condition_rows(self):
        corpus = generate(load_generator_config(n_records=10))
        rows = record_conditions(corpus)
        assert [r["record_id"] for r in rows] == corpus.record_ids
        assert all(r["condition"] for r in rows)

    def test_unknown_subtype_rejected(self):
        base = load_generator_config()
        vocab = dict(base.vocabulary)
        vocab["Gizmo"] = ("x",)
        with pytest.raises(ValueError):
            generate(base.replace(vocabulary=vocab))


class TestCorpusFiles:
    def test_round_trip(self, tmp_path):
        corpus = generate(load_generator_config(n_records=6))
        corpus.splits = {r: ("train" if i < 4 else "test") for i, r in enumerate(corpus.record_ids)}
        write_corpus(corpus, tmp_path, SCHEME)
        back = read_corpus(tmp_path, SCHEME)
        assert back.docs == sorted(corpus.docs, key=lambda a: a.doc.doc_id)
        assert back.splits == corpus.splits
        assert len(back.subset("train")) == 8

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_corpus(tmp_path / "nope", SCHEME)

    def test_bad_doc_id(self, tmp_path):
        from medie.scheme import AnnotationSet, Document
        with pytest.raises(ValueError):
            write_corpus(Corpus([AnnotationSet(Document("../x", "abc"))]), tmp_path)
