"""Per-test-sample example selection over exhaustive similarity scans.

Pools are small (hundreds of documents, low thousands of entities), so every
selector does an exact scan and a deterministic sort: better score first,
ties broken by ascending ref id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .dataset import Entity
from .embedding import EmbeddingVector, cosine_similarity
from .errors import PoolEmpty
from .layout import BinaryLayoutImage, layout_similarity

ORDERS = ("ascending", "descending")


@dataclass(frozen=True)
class RankedExample:
    ref_id: str  # doc_id for document channels, entity id for the entity channel
    score: float
    metric: str  # text_doc | layout | text_ent


@dataclass
class ExampleSelection:
    """The three example channels retrieved for one test document."""

    test_doc_id: str
    text_docs: list[RankedExample] = field(default_factory=list)
    layout_docs: list[RankedExample] = field(default_factory=list)
    entity_examples: dict[str, list[RankedExample]] = field(default_factory=dict)
    order: str = "descending"

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order!r}")
        for ex in list(self.text_docs) + list(self.layout_docs):
            if ex.ref_id == self.test_doc_id:
                raise ValueError(f"selection for {self.test_doc_id!r} contains the test doc")


def _top_k(scored: list[RankedExample], n_s: int) -> list[RankedExample]:
    scored.sort(key=lambda r: (-r.score, r.ref_id))
    return scored[:n_s]


def select_text_similar_docs(
    test_doc_id: str,
    doc_vectors: Mapping[str, EmbeddingVector],
    n_s: int,
) -> list[RankedExample]:
    """Top n_s pool documents by cosine to the test document, best first."""
    if test_doc_id not in doc_vectors:
        raise PoolEmpty(f"no embedding for test document {test_doc_id!r}")
    test_vec = doc_vectors[test_doc_id]
    pool = [(doc_id, vec) for doc_id, vec in doc_vectors.items() if doc_id != test_doc_id]
    if not pool:
        raise PoolEmpty("document pool is empty")
    scored = [
        RankedExample(doc_id, cosine_similarity(test_vec, vec), "text_doc")
        for doc_id, vec in pool
    ]
    return _top_k(scored, n_s)


def select_layout_similar_docs(
    test_doc_id: str,
    layouts: Mapping[str, BinaryLayoutImage],
    n_s: int,
    metric: str = "mse",
) -> list[RankedExample]:
    """Top n_s pool documents under the layout metric's ordering key.

    The recorded score is the raw metric value (mse ascending is best; ssim
    and cosine descending).
    """
    if test_doc_id not in layouts:
        raise PoolEmpty(f"no layout image for test document {test_doc_id!r}")
    test_img = layouts[test_doc_id]
    pool = [(doc_id, img) for doc_id, img in layouts.items() if doc_id != test_doc_id]
    if not pool:
        raise PoolEmpty("layout pool is empty")
    scored = []
    for doc_id, img in pool:
        score = layout_similarity(test_img, img, metric)
        scored.append((score.comparable, RankedExample(doc_id, score.value, "layout")))
    scored.sort(key=lambda pair: (-pair[0], pair[1].ref_id))
    return [r for _, r in scored[:n_s]]


def select_similar_entities(
    test_entities: Sequence[Entity],
    pool_entities: Sequence[Entity],
    test_vectors: Mapping[str, EmbeddingVector],
    pool_vectors: Mapping[str, EmbeddingVector],
    n_s: int,
) -> dict[str, list[RankedExample]]:
    """Per test entity, the top n_s pool entities by cosine, best first.

    Inputs are the already-filtered entity lists; with f test entities the
    result holds f * n_s examples in total (fewer only if the pool is small).
    """
    if not pool_entities:
        raise PoolEmpty("entity pool is empty")
    out: dict[str, list[RankedExample]] = {}
    for test_e in test_entities:
        test_vec = test_vectors[test_e.entity_id]
        scored = [
            RankedExample(
                pool_e.entity_id,
                cosine_similarity(test_vec, pool_vectors[pool_e.entity_id]),
                "text_ent",
            )
            for pool_e in pool_entities
        ]
        out[test_e.entity_id] = _top_k(scored, n_s)
    return out


def order_examples(sel: ExampleSelection, order: str) -> ExampleSelection:
    """Arrange both document channels in the given similarity direction.

    Selections are built descending (most similar first); asking for the
    current direction is a no-op, so the operation is idempotent.
    """
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    if order == sel.order:
        return sel
    return replace(
        sel,
        text_docs=list(reversed(sel.text_docs)),
        layout_docs=list(reversed(sel.layout_docs)),
        order=order,
    )


# --- JSON form for the `select` subcommand and run artifacts ---


def selection_to_obj(sel: ExampleSelection) -> dict:
    def dump(examples):
        return [{"ref_id": r.ref_id, "score": r.score, "metric": r.metric} for r in examples]

    return {
        "test_doc_id": sel.test_doc_id,
        "order": sel.order,
        "text_docs": dump(sel.text_docs),
        "layout_docs": dump(sel.layout_docs),
        "entity_examples": {k: dump(v) for k, v in sorted(sel.entity_examples.items())},
    }


def selection_from_obj(obj: dict) -> ExampleSelection:
    def load(items):
        return [RankedExample(i["ref_id"], float(i["score"]), i["metric"]) for i in items]

    return ExampleSelection(
        test_doc_id=obj["test_doc_id"],
        text_docs=load(obj["text_docs"]),
        layout_docs=load(obj["layout_docs"]),
        entity_examples={k: load(v) for k, v in obj["entity_examples"].items()},
        order=obj.get("order", "descending"),
    )


def selection_to_json(sel: ExampleSelection) -> str:
    return json.dumps(selection_to_obj(sel), indent=2, ensure_ascii=False)
