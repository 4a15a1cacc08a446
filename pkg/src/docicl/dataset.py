"""Canonical document model: loading, validation, filtering, synthetic variants.

The canonical on-disk format is line-delimited JSON, one document per line:

    {"doc_id": str, "split": "train"|"test", "page": [w,h] or null,
     "entities": [{"id": str, "text": str, "box": [x1,y1,x2,y2],
                   "label": str or null}]}

UTF-8, LF-terminated. ``save_canonical`` followed by ``load_canonical`` is an
identity on documents.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DonorTooSmall, NoDonorError, ParseError, ValidationError

SPLITS = ("train", "test")

# Characters treated as carrying no semantic content on their own. A text is
# "numeric-only" when every character of its trimmed form is a digit 0-9, one
# of these punctuation marks, or whitespace. The paper-side rule names only
# "texts consisting solely of numbers"; the exact punctuation set is this
# package's choice (prices, dates, percentages all count as numeric).
NUMERIC_PUNCTUATION = ".,-/%$"


@dataclass(frozen=True)
class BoxRect:
    """Integer pixel rectangle in page coordinates, corners inclusive-exclusive."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not isinstance(v, int):
                raise ValidationError(f"box coordinate {name}={v!r} is not an integer")
            if v < 0:
                raise ValidationError(f"box coordinate {name}={v} is negative")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValidationError(
                f"box [{self.x1},{self.y1},{self.x2},{self.y2}] has inverted corners"
            )

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    def translate(self, dx: int, dy: int) -> "BoxRect":
        return BoxRect(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_list(self) -> list[int]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class Entity:
    """One OCR text span with its box and, for labeled data, its gold label."""

    entity_id: str
    text: str
    box: BoxRect
    gold_label: str | None = None

    def __post_init__(self):
        if not self.entity_id:
            raise ValidationError("entity has an empty id")
        if not self.text.strip():
            raise ValidationError(f"entity {self.entity_id!r} has empty text")


@dataclass(frozen=True)
class Document:
    """One sample: an ordered list of entities plus optional page geometry."""

    doc_id: str
    split: str
    entities: tuple[Entity, ...]
    page: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.doc_id:
            raise ValidationError("document has an empty doc_id")
        if self.split not in SPLITS:
            raise ValidationError(
                f"document {self.doc_id!r}: split {self.split!r} is not one of {SPLITS}"
            )
        if isinstance(self.entities, list):
            object.__setattr__(self, "entities", tuple(self.entities))
        if len(self.entities) < 1:
            raise ValidationError(f"document {self.doc_id!r} has no entities")
        seen: set[str] = set()
        for e in self.entities:
            if e.entity_id in seen:
                raise ValidationError(
                    f"document {self.doc_id!r}: duplicate entity_id {e.entity_id!r}"
                )
            seen.add(e.entity_id)
        if self.page is not None:
            if isinstance(self.page, list):
                object.__setattr__(self, "page", tuple(self.page))
            w, h = self.page
            if w < 1 or h < 1:
                raise ValidationError(f"document {self.doc_id!r}: page size {w}x{h}")
            for e in self.entities:
                if e.box.x2 > w or e.box.y2 > h:
                    raise ValidationError(
                        f"document {self.doc_id!r}: entity {e.entity_id!r} box "
                        f"{e.box.as_list()} exceeds page {w}x{h}"
                    )

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    def boxes(self) -> list[BoxRect]:
        return [e.box for e in self.entities]


@dataclass(frozen=True)
class LabelSchema:
    """Label codes for a dataset, each with an optional plain-language description."""

    dataset_name: str
    labels: tuple[tuple[str, str | None], ...]

    def __post_init__(self):
        if not self.labels:
            raise ValidationError(f"schema {self.dataset_name!r} has no labels")
        codes = [c for c, _ in self.labels]
        if len(set(codes)) != len(codes):
            raise ValidationError(f"schema {self.dataset_name!r} has duplicate codes")

    def codes(self) -> list[str]:
        return [c for c, _ in self.labels]


# --- canonical (de)serialization --------------------------------------------


def document_to_obj(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "split": doc.split,
        "page": list(doc.page) if doc.page is not None else None,
        "entities": [
            {
                "id": e.entity_id,
                "text": e.text,
                "box": e.box.as_list(),
                "label": e.gold_label,
            }
            for e in doc.entities
        ],
    }


def document_from_obj(obj: dict) -> Document:
    try:
        entities = tuple(
            Entity(
                entity_id=str(item["id"]),
                text=str(item["text"]),
                box=BoxRect(*[int(v) for v in item["box"]]),
                gold_label=item.get("label"),
            )
            for item in obj["entities"]
        )
        page = obj.get("page")
        return Document(
            doc_id=str(obj["doc_id"]),
            split=str(obj["split"]),
            entities=entities,
            page=tuple(int(v) for v in page) if page is not None else None,
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed document record: {exc}") from exc


def load_canonical(path: str | Path) -> list[Document]:
    """Load a line-delimited canonical file, validating every document."""
    path = Path(path)
    docs: list[Document] = []
    seen_ids: set[str] = set()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        doc = document_from_obj(obj)
        if doc.doc_id in seen_ids:
            raise ValidationError(f"{path}:{lineno}: duplicate doc_id {doc.doc_id!r}")
        seen_ids.add(doc.doc_id)
        docs.append(doc)
    return docs


def save_canonical(docs: Iterable[Document], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(document_to_obj(doc), ensure_ascii=False))
            fh.write("\n")


# --- entity filtering --------------------------------------------------------


def is_numeric_only(text: str) -> bool:
    """True when the trimmed text has no character outside the numeric set."""
    trimmed = text.strip()
    if not trimmed:
        return True
    return all(
        ch.isspace() or ch in NUMERIC_PUNCTUATION or ("0" <= ch <= "9")
        for ch in trimmed
    )


def filter_semantic_entities(doc: Document) -> list[Entity]:
    """Drop entities whose text is numeric-only; order is preserved."""
    return [e for e in doc.entities if not is_numeric_only(e.text)]


# --- synthetic variants -------------------------------------------------------


def synthesize_replace_text(doc: Document, pool: Sequence[Document], seed: int) -> Document:
    """Replace each entity's text with a same-label text drawn from the pool.

    Boxes and labels are untouched; the draw is uniform over all pool entities
    carrying the same gold label and deterministic under the seed.
    """
    donors: dict[str, list[str]] = {}
    for pool_doc in pool:
        for e in pool_doc.entities:
            if e.gold_label is not None:
                donors.setdefault(e.gold_label, []).append(e.text)
    rng = random.Random(seed)
    new_entities = []
    for e in doc.entities:
        if e.gold_label is None or e.gold_label not in donors:
            raise NoDonorError(
                f"document {doc.doc_id!r}: entity {e.entity_id!r} has label "
                f"{e.gold_label!r} with no donor in the pool"
            )
        new_entities.append(replace(e, text=rng.choice(donors[e.gold_label])))
    return replace(doc, entities=tuple(new_entities))


def synthesize_replace_layout(doc: Document, donor: Document, seed: int = 0) -> Document:
    """Keep texts and labels, adopt the donor's first n_e boxes in reading order.

    The result takes the donor's page geometry so the adopted boxes always
    validate. The seed is accepted for interface symmetry with the other
    generator; the positional mapping itself is deterministic.
    """
    del seed
    if donor.n_entities < doc.n_entities:
        raise DonorTooSmall(
            f"donor {donor.doc_id!r} has {donor.n_entities} entities, "
            f"document {doc.doc_id!r} needs {doc.n_entities}"
        )
    new_entities = tuple(
        replace(e, box=donor.entities[i].box) for i, e in enumerate(doc.entities)
    )
    return replace(doc, entities=new_entities, page=donor.page)


def subsample_pool(docs: Sequence[Document], limit: int, seed: int) -> list[Document]:
    """Uniform sample without replacement, returned in stable doc_id order."""
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    if limit >= len(docs):
        sample = list(docs)
    else:
        sample = random.Random(seed).sample(list(docs), limit)
    return sorted(sample, key=lambda d: d.doc_id)
