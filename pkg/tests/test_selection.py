import math
import random

import numpy as np
import pytest

from docicl.dataset import BoxRect, Entity
from docicl.embedding import EmbeddingVector, HashEmbedder, cosine_similarity
from docicl.errors import PoolEmpty
from docicl.layout import render_layout
from docicl.selection import (
    ExampleSelection,
    RankedExample,
    order_examples,
    select_layout_similar_docs,
    select_similar_entities,
    select_text_similar_docs,
    selection_from_obj,
    selection_to_obj,
)

from conftest import make_corpus


def unit_vec_at_cosine(c):
    """A 2-D unit vector with exactly cosine c against (1, 0)."""
    return EmbeddingVector("p", np.array([c, math.sqrt(1 - c * c)]))


class TestTextSimilarDocs:
    def test_top_k_semantics(self):
        vectors = {
            "test": EmbeddingVector("p", np.array([1.0, 0.0])),
            "high": unit_vec_at_cosine(0.9),
            "mid": unit_vec_at_cosine(0.5),
            "low": unit_vec_at_cosine(0.1),
        }
        out = select_text_similar_docs("test", vectors, 2)
        assert [r.ref_id for r in out] == ["high", "mid"]
        assert out[0].score == pytest.approx(0.9)
        assert all(r.metric == "text_doc" for r in out)

    def test_n_s_larger_than_pool(self):
        vectors = {
            "test": unit_vec_at_cosine(1.0),
            "a": unit_vec_at_cosine(0.3),
            "b": unit_vec_at_cosine(0.6),
        }
        out = select_text_similar_docs("test", vectors, 10)
        assert len(out) == 2

    def test_tie_breaks_ascending_id(self):
        same = unit_vec_at_cosine(0.4)
        vectors = {
            "test": unit_vec_at_cosine(1.0),
            "zeta": same,
            "alpha": same,
        }
        out = select_text_similar_docs("test", vectors, 2)
        assert [r.ref_id for r in out] == ["alpha", "zeta"]

    def test_excludes_test_doc(self):
        vectors = {"test": unit_vec_at_cosine(1.0), "a": unit_vec_at_cosine(0.2)}
        out = select_text_similar_docs("test", vectors, 5)
        assert "test" not in [r.ref_id for r in out]

    def test_pool_empty(self):
        with pytest.raises(PoolEmpty):
            select_text_similar_docs("test", {"test": unit_vec_at_cosine(1.0)}, 1)


def _random_layouts(rng, n, page=(16, 16)):
    layouts = {}
    for i in range(n):
        boxes = []
        for _ in range(rng.randrange(1, 4)):
            x1, y1 = rng.randrange(0, 12), rng.randrange(0, 12)
            boxes.append(BoxRect(x1, y1, x1 + rng.randrange(1, 5), y1 + rng.randrange(1, 5)))
        layouts[f"doc-{i:02d}"] = render_layout(boxes, page)
    return layouts


class TestLayoutSimilarDocs:
    def test_identical_layout_ranks_first(self):
        rng = random.Random(0)
        layouts = _random_layouts(rng, 6)
        layouts["twin"] = layouts["doc-00"]
        out = select_layout_similar_docs("doc-00", layouts, 3, "mse")
        assert out[0].ref_id == "twin"
        assert out[0].score == 0.0

    def test_mse_ascending(self):
        rng = random.Random(1)
        layouts = _random_layouts(rng, 8)
        out = select_layout_similar_docs("doc-00", layouts, 4, "mse")
        scores = [r.score for r in out]
        assert scores == sorted(scores)

    def test_matches_exhaustive_oracle(self):
        rng = random.Random(2)
        layouts = _random_layouts(rng, 10)
        test_img = layouts["doc-00"]
        oracle = []
        for doc_id, img in layouts.items():
            if doc_id == "doc-00":
                continue
            mse = float(np.mean((test_img.pixels.astype(float) - img.pixels.astype(float)) ** 2))
            oracle.append((mse, doc_id))
        oracle.sort()
        out = select_layout_similar_docs("doc-00", layouts, len(oracle), "mse")
        assert [r.ref_id for r in out] == [doc_id for _, doc_id in oracle]

    def test_ssim_descending(self):
        rng = random.Random(3)
        layouts = _random_layouts(rng, 6, page=(24, 24))
        out = select_layout_similar_docs("doc-00", layouts, 5, "ssim")
        scores = [r.score for r in out]
        assert scores == sorted(scores, reverse=True)


class TestSimilarEntities:
    def _entities(self, texts, prefix):
        return [
            Entity(f"{prefix}{i}", t, BoxRect(0, 12 * i, 10, 12 * i + 10), gold_label="other")
            for i, t in enumerate(texts)
        ]

    def test_total_example_count(self):
        provider = HashEmbedder(dim=32, seed=0)
        test = self._entities(["ALPHA", "BETA", "GAMMA"], "t")
        pool = self._entities(["DELTA", "EPSILON", "ZETA", "ETA", "THETA"], "p")
        tv = {e.entity_id: provider.embed([e.text])[0] for e in test}
        pv = {e.entity_id: provider.embed([e.text])[0] for e in pool}
        out = select_similar_entities(test, pool, tv, pv, 4)
        assert sum(len(v) for v in out.values()) == 12  # 3 x 4

    def test_identical_text_ranks_first(self):
        provider = HashEmbedder(dim=32, seed=0)
        test = self._entities(["TOTAL DUE"], "t")
        pool = self._entities(["SOMETHING ELSE", "TOTAL DUE", "ANOTHER"], "p")
        tv = {e.entity_id: provider.embed([e.text])[0] for e in test}
        pv = {e.entity_id: provider.embed([e.text])[0] for e in pool}
        out = select_similar_entities(test, pool, tv, pv, 2)
        best = out["t0"][0]
        assert best.ref_id == "p1"
        assert best.score == pytest.approx(1.0, abs=1e-9)

    def test_matches_exhaustive_oracle(self):
        provider = HashEmbedder(dim=32, seed=1)
        texts = [f"{a}{b}" for a in "ABCDE" for b in "VWXYZ"][:20]
        pool = self._entities(texts, "p")
        test = self._entities(["AX", "CW", "EV"], "t")
        tv = {e.entity_id: provider.embed([e.text])[0] for e in test}
        pv = {e.entity_id: provider.embed([e.text])[0] for e in pool}
        out = select_similar_entities(test, pool, tv, pv, 4)
        for te in test:
            scores = sorted(
                ((-cosine_similarity(tv[te.entity_id], pv[pe.entity_id]), pe.entity_id) for pe in pool),
            )
            expected = [doc_id for _, doc_id in scores[:4]]
            assert [r.ref_id for r in out[te.entity_id]] == expected

    def test_pool_empty(self):
        test = self._entities(["A"], "t")
        with pytest.raises(PoolEmpty):
            select_similar_entities(test, [], {}, {}, 2)


class TestOrdering:
    def _selection(self):
        return ExampleSelection(
            test_doc_id="q",
            text_docs=[RankedExample("a", 0.9, "text_doc"), RankedExample("b", 0.4, "text_doc")],
            layout_docs=[RankedExample("c", 0.01, "layout"), RankedExample("d", 0.2, "layout")],
            entity_examples={"e0": [RankedExample("p/x", 0.8, "text_ent")]},
        )

    def test_default_is_descending(self):
        assert self._selection().order == "descending"

    def test_reversal(self):
        sel = order_examples(self._selection(), "ascending")
        assert [r.ref_id for r in sel.text_docs] == ["b", "a"]
        assert [r.ref_id for r in sel.layout_docs] == ["d", "c"]
        assert sel.order == "ascending"

    def test_idempotent(self):
        once = order_examples(self._selection(), "ascending")
        twice = order_examples(once, "ascending")
        assert twice.text_docs == once.text_docs
        assert twice.layout_docs == once.layout_docs

    def test_entity_examples_untouched(self):
        sel = order_examples(self._selection(), "ascending")
        assert [r.ref_id for r in sel.entity_examples["e0"]] == ["p/x"]

    def test_rejects_test_doc_in_lists(self):
        with pytest.raises(ValueError):
            ExampleSelection(test_doc_id="a", text_docs=[RankedExample("a", 1.0, "text_doc")])


class TestDeterminismAndJson:
    def test_identical_inputs_identical_selection(self):
        docs = make_corpus(6, 1, seed=2)
        provider = HashEmbedder(dim=64, seed=0)
        from docicl.embedding import embed_documents

        vectors = embed_documents(docs, provider)
        a = select_text_similar_docs(docs[-1].doc_id, vectors, 4)
        b = select_text_similar_docs(docs[-1].doc_id, vectors, 4)
        assert a == b

    def test_json_round_trip(self):
        sel = ExampleSelection(
            test_doc_id="q",
            text_docs=[RankedExample("a", 0.9, "text_doc")],
            layout_docs=[RankedExample("c", 0.01, "layout")],
            entity_examples={"e0": [RankedExample("p/x", 0.8, "text_ent")]},
        )
        assert selection_from_obj(selection_to_obj(sel)) == sel
