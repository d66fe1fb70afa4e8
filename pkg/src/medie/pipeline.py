"""Entity -> (attribute, relation) extraction pipeline and pre-annotation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint, crf, span
from .features import FeatureConfig
from .optim import TrainConfig
from .scheme import AnnotationSet, Document, SchemeRegistry, builtin_scheme


@dataclass
class PipelineBundle:
    crf: crf.CrfModel
    attr: span.AttributeModel
    rel: span.RelationModel
    scheme: SchemeRegistry

    def __post_init__(self):
        if self.attr.feature_config != self.rel.feature_config:
            raise ValueError("attribute and relation heads must share a feature configuration")

    def extract(self, doc: Document) -> AnnotationSet:
        return extract(self, doc)


def extract(bundle: PipelineBundle, doc: Document) -> AnnotationSet:
    """Tag entities, then predict attributes and relations on the predicted entities."""
    if not doc.text:
        return AnnotationSet(doc)
    entities = crf.predict_entities(bundle.crf, doc.text)
    known = set(bundle.scheme.entity_names)
    entities = {e for e in entities if e.type in known}
    attrs, rels = span.predict_doc(bundle.attr, bundle.rel, doc, entities, bundle.scheme)
    return AnnotationSet(doc, frozenset(entities), frozenset(rels), frozenset(attrs))


def drop_entities(ann: AnnotationSet, drop_rate: float, rng: np.random.Generator) -> AnnotationSet:
    """Drop each entity with probability ``drop_rate``, with everything attached to it."""
    if not 0 <= drop_rate <= 1:
        raise ValueError("drop_rate must lie in [0, 1]")
    kept = frozenset(e for e in sorted(ann.entities) if not rng.random() < drop_rate)
    return ann.replace(
        entities=kept,
        relations=frozenset(r for r in ann.relations if r.head in kept and r.tail in kept),
        attributes=frozenset(a for a in ann.attributes if a.entity in kept),
    )


def preannotate(bundle: PipelineBundle, docs: Sequence[Document], drop_rate: float,
                seed: int = 0) -> list[AnnotationSet]:
    """Extract, then randomly thin the drafts.

    Document ``i`` draws from its own generator seeded by ``(seed, i)``, so the
    outcome does not depend on how documents are distributed over workers.
    """
    if not 0 <= drop_rate <= 1:
        raise ValueError("drop_rate must lie in [0, 1]")
    return [drop_entities(extract(bundle, doc), drop_rate, np.random.default_rng([seed, i]))
            for i, doc in enumerate(docs)]


def train_pipeline(train: Sequence[AnnotationSet], dev: Sequence[AnnotationSet],
                   entity_config: TrainConfig | None = None, span_config: TrainConfig | None = None,
                   feature_config: FeatureConfig | None = None, scheme: SchemeRegistry | None = None,
                   relation_config: TrainConfig | None = None, alpha: float = span.DEFAULT_ALPHA,
                   window: int = span.DEFAULT_WINDOW) -> PipelineBundle:
    """Train the three models separately on gold annotations."""
    scheme = scheme or builtin_scheme()
    feature_config = feature_config or FeatureConfig()
    entity_model = crf.train(train, dev, entity_config, feature_config, scheme)
    attr, rel = span.train_span_models(train, dev, span_config, feature_config, scheme,
                                       alpha=alpha, window=window, relation_config=relation_config)
    return PipelineBundle(entity_model, attr, rel, scheme)


def save_bundle(bundle: PipelineBundle, path: str | Path):
    checkpoint.save(path, "pipeline", {
        "crf": crf.model_state(bundle.crf),
        "attribute": span.attribute_state(bundle.attr),
        "relation": span.relation_state(bundle.rel),
    })


def save_crf(model: crf.CrfModel, path: str | Path):
    checkpoint.save(path, "crf", {"crf": crf.model_state(model)})


def save_span(attr: span.AttributeModel, rel: span.RelationModel, path: str | Path):
    checkpoint.save(path, "span", {"attribute": span.attribute_state(attr),
                                   "relation": span.relation_state(rel)})


def load_models(*paths: str | Path) -> dict:
    """Load one or more checkpoints into a ``{"crf", "attribute", "relation"}`` dict."""
    out = {}
    for path in paths:
        _, models = checkpoint.load(path)
        for name, (meta, arrays) in models.items():
            if name == "crf":
                out[name] = crf.model_from_state(meta, arrays)
            elif name == "attribute":
                out[name] = span.attribute_from_state(meta, arrays)
            elif name == "relation":
                out[name] = span.relation_from_state(meta, arrays)
            else:
                raise checkpoint.CheckpointError(f"{path}: unknown model {name!r}")
    return out


def load_bundle(*paths: str | Path, scheme: SchemeRegistry | None = None) -> PipelineBundle:
    models = load_models(*paths)
    missing = {"crf", "attribute", "relation"} - set(models)
    if missing:
        raise checkpoint.CheckpointError(f"checkpoints lack {sorted(missing)}")
    scheme = scheme or builtin_scheme()
    tags = set(models["crf"].tags) - {"O"}
    unknown = {t[2:] for t in tags} - set(scheme.entity_names)
    if unknown:
        raise checkpoint.CheckpointError(f"entity model uses types absent from the scheme: {sorted(unknown)}")
    return PipelineBundle(models["crf"], models["attribute"], models["relation"], scheme)
