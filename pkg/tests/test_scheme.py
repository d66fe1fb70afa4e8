import itertools

import pytest

from medie.scheme import (AnnotationSet, Attribute, Document, Entity, Relation, SchemeError,
                          builtin_scheme, entities_overlap, load_scheme, resolve_scheme,
                          scheme_from_dict)

from helpers import ATTRIBUTE_TABLE, RELATION_TABLE, ROLES, SUBTYPES, SUPER


@pytest.fixture(scope="module")
def scheme():
    return builtin_scheme()


class TestInventory:
    def test_counts(self, scheme):
        assert len(scheme.entity_names) == 18
        assert len(scheme.relation_names) == 10
        assert len(scheme.attribute_names) == 10

    def test_subtypes_match_transcription(self, scheme):
        assert set(scheme.entity_names) == set(SUBTYPES)
        for sup, subs in SUPER.items():
            assert set(scheme.subtypes_of(sup)) == set(subs)

    def test_each_subtype_has_one_super_type(self, scheme):
        owners = {}
        for sup in scheme.super_types:
            for sub in scheme.subtypes_of(sup):
                owners.setdefault(sub, []).append(sup)
        assert all(len(v) == 1 for v in owners.values())

    def test_negation_row(self, scheme):
        neg = scheme.attribute("Negation").applicable_to
        assert "Self-Reported Abnormality" in neg
        assert "Test Result" not in neg
        assert "Abnormal Test Result" not in neg

    def test_require_intervention_tails_cover_treatment_and_drug(self, scheme):
        tails = scheme.relation("Status–Require–Intervention").allowed_tails
        assert set(SUPER["Treatment"]) | set(SUPER["Drug"]) <= tails


class TestApplicabilityTables:
    @pytest.mark.parametrize("name", sorted(RELATION_TABLE))
    def test_relation_rows(self, scheme, name):
        heads, tails = RELATION_TABLE[name]
        rt = scheme.relation(name)
        assert rt.allowed_heads == heads
        assert rt.allowed_tails == tails

    @pytest.mark.parametrize("name", sorted(ATTRIBUTE_TABLE))
    def test_attribute_columns(self, scheme, name):
        assert scheme.attribute(name).applicable_to == ATTRIBUTE_TABLE[name]

    def test_full_type_grid(self, scheme):
        for name, (heads, tails) in RELATION_TABLE.items():
            for h, t in itertools.product(SUBTYPES, repeat=2):
                assert scheme.relation_allows(name, h, t) == (h in heads and t in tails)
                assert (name in scheme.allowed_relations(h, t)) == (h in heads and t in tails)

    def test_role_map(self, scheme):
        for sub in SUBTYPES:
            expected = {role for role, members in ROLES.items() if sub in members}
            assert scheme.role_map[sub] == expected

    def test_department_never_related(self, scheme):
        for other in SUBTYPES:
            assert scheme.allowed_relations("Department", other) == ()
            assert scheme.allowed_relations(other, "Department") == ()

    def test_modify_qualifiers(self, scheme):
        assert scheme.relation("Intervention–Modify–Status").qualifiers == ("Improve", "Worsen", "Unspecified")


class TestNameForms:
    def test_relation_aliases(self, scheme):
        rt = scheme.relation("Information–Suggest–Status")
        assert scheme.relation("Information--Suggest--Status") is rt
        assert scheme.relation("Information-Suggest-Status") is rt

    def test_entity_file_name(self, scheme):
        assert scheme.entity("Self-Reported-Abnormality").name == "Self-Reported Abnormality"
        assert scheme.entity("Disease-or-Syndrome").file_name == "Disease-or-Syndrome"

    def test_unknown_names_raise(self, scheme):
        with pytest.raises(SchemeError):
            scheme.entity("Nonexistent")
        with pytest.raises(SchemeError):
            scheme.relation("Status–Eats–Information")
        with pytest.raises(SchemeError):
            scheme.attribute("Sarcasm")


class TestEntitiesOverlap:
    @pytest.mark.parametrize("a,b,expected", [
        ((2, 6), (6, 9), False),
        ((2, 6), (4, 5), True),
        ((2, 6), (2, 6), True),
        ((2, 6), (0, 3), True),
        ((2, 6), (0, 2), False),
    ])
    def test_cases(self, a, b, expected):
        x, y = Entity("Drug", *a), Entity("Drug", *b)
        assert entities_overlap(x, y) is expected
        assert entities_overlap(y, x) is expected


class TestDataModel:
    def test_record_id_defaults_to_doc_id(self):
        assert Document("d1", "abc").record_id == "d1"

    def test_set_semantics(self):
        e = Entity("Drug", 0, 2)
        ann = AnnotationSet(Document("d", "阿司匹林"), [e, Entity("Drug", 0, 2)], [], [Attribute("Negation", e)])
        assert len(ann.entities) == 1
        assert ann.attributes_of(e) == {"Negation"}

    def test_outcome_is_metadata(self):
        h, t = Entity("Drug", 0, 2), Entity("Disease or Syndrome", 3, 5)
        a = Relation("Intervention–Modify–Status", h, t, outcome="Improve")
        b = Relation("Intervention–Modify–Status", h, t)
        assert a == b and hash(a) == hash(b)

    def test_values_are_immutable(self):
        e = Entity("Drug", 0, 2)
        with pytest.raises(AttributeError):
            e.start = 1


class TestSchemeFiles:
    def test_resolve_builtin(self):
        assert resolve_scheme(None) is builtin_scheme()
        assert resolve_scheme("builtin") is builtin_scheme()

    def test_custom_scheme(self, tmp_path):
        path = tmp_path / "tiny.yaml"
        path.write_text(
            "entity_types:\n"
            "  - super: Thing\n    subtypes: [Cat, Dog]\n"
            "roles: {}\n"
            "relation_types:\n"
            "  - name: Chases\n    heads: [Dog]\n    tails: [Cat]\n"
            "attribute_types:\n"
            "  - name: Sleepy\n    applicable_to: [Thing]\n", encoding="utf-8")
        s = load_scheme(path)
        assert s.entity_names == ("Cat", "Dog")
        assert s.allowed_relations("Dog", "Cat") == ("Chases",)
        assert s.allowed_relations("Cat", "Dog") == ()
        assert set(s.attribute("Sleepy").applicable_to) == {"Cat", "Dog"}

    def test_unknown_reference_rejected(self):
        data = {"entity_types": [{"super": "Thing", "subtypes": ["Cat"]}],
                "relation_types": [{"name": "R", "heads": ["Cat"], "tails": ["Bird"]}],
                "attribute_types": []}
        with pytest.raises(SchemeError):
            scheme_from_dict(data)
