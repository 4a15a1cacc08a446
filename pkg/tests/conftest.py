"""Shared fixtures: tiny document builders and a synthetic canonical corpus."""

from __future__ import annotations

import random

import pytest

from docicl.dataset import BoxRect, Document, Entity

WORDS = (
    "ACME", "MART", "STORE", "CAFE", "DELI", "KIOSK", "GROCER", "BAKERY",
    "NORTH", "SOUTH", "RIVER", "LAKE", "HILL", "PINE", "OAK", "ELM",
)
LABELS = ("company", "date", "address", "total", "other")


def make_entity(entity_id="e0", text="TOTAL", box=(5, 5, 40, 15), label=None):
    return Entity(entity_id=entity_id, text=text, box=BoxRect(*box), gold_label=label)


def make_doc(doc_id="doc-1", split="train", rows=None, page=(200, 300)):
    rows = rows or [("TOTAL", (5, 5, 40, 15), "other")]
    entities = tuple(
        make_entity(f"e{i}", text, box, label) for i, (text, box, label) in enumerate(rows)
    )
    return Document(doc_id=doc_id, split=split, entities=entities, page=page)


def random_doc(doc_id: str, split: str, rng: random.Random, page=(200, 300)) -> Document:
    """A receipt-shaped random document with at least one non-numeric entity."""
    n = rng.randint(3, 6)
    rows = []
    y = 10
    for i in range(n):
        kind = rng.choice(("word", "word", "price", "date"))
        if i == 0 or kind == "word":
            text = f"{rng.choice(WORDS)} {rng.choice(WORDS)} {rng.randrange(100)}"
            label = rng.choice(("company", "address", "other"))
        elif kind == "price":
            text = f"{rng.randrange(1, 100)}.{rng.randrange(100):02d}"
            label = rng.choice(("total", "other"))
        else:
            text = f"{rng.randrange(1, 13):02d}/{rng.randrange(1, 29):02d}/2021"
            label = "date"
        x = rng.randrange(5, 60)
        w = rng.randrange(30, 120)
        h = rng.randrange(8, 16)
        rows.append((text, (x, y, min(page[0], x + w), min(page[1], y + h)), label))
        y += h + rng.randrange(2, 30)
        if y > page[1] - 20:
            y = page[1] - 20
    return make_doc(doc_id, split, rows, page)


def make_corpus(n_train: int, n_test: int, seed: int = 0) -> list[Document]:
    """Random labeled corpus with unique per-document text sequences."""
    rng = random.Random(seed)
    docs: list[Document] = []
    seen: set[tuple[str, ...]] = set()
    idx = 0
    while len(docs) < n_train + n_test:
        split = "train" if len(docs) < n_train else "test"
        doc = random_doc(f"{split}-{idx:03d}", split, rng)
        idx += 1
        texts = tuple(e.text for e in doc.entities)
        if texts in seen:
            continue
        seen.add(texts)
        docs.append(doc)
    return docs


@pytest.fixture
def corpus():
    return make_corpus(n_train=8, n_test=3, seed=7)
