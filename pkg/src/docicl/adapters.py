"""Best-effort importers for native FUNSD / CORD / SROIE annotation layouts.

Native schemas vary by release, so each adapter documents the mapping it
applies and is tolerant of cosmetic directory differences. Native records
that violate the canonical invariants (empty text, inverted or negative
boxes) are rejected loudly: skipped with a logged warning naming the
offending id, or a ParseError under ``strict=True``. They are never
silently dropped.

Mappings
--------
FUNSD: one JSON per page with a ``form`` list; each form item becomes one
entity (text, box ``[x1,y1,x2,y2]``, label in header/question/answer/other).
Annotation files live either directly in the input directory or under an
``annotations/`` subdirectory. Page size is not part of the annotation file
and is left unset.

CORD: one JSON per receipt with a ``valid_line`` list; each valid line
becomes one entity whose text joins the line's words with single spaces and
whose box is the axis-aligned hull of the word quads (floored/ceiled to
integers, clamped to the page). The label is the line ``category``; page
size comes from ``meta.image_size``.

SROIE: OCR files with lines ``x1,y1,x2,y2,x3,y3,x4,y4,text...`` paired with
key-field files (JSON with company/date/address/total). OCR files are found
under ``box/`` or directly in the directory; key files under ``entities/``
or as sibling ``<stem>.json``. Each OCR line becomes one entity; its label
is the key whose value equals, contains, or is contained in the line text
after whitespace/case normalization, otherwise ``other``.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .dataset import BoxRect, Document, Entity
from .errors import ParseError, UnsupportedFormat, ValidationError

logger = logging.getLogger(__name__)

FORMATS = ("funsd", "cord", "sroie")


def import_dataset(
    path: str | Path,
    format: str,
    split: str | None = None,
    strict: bool = False,
) -> list[Document]:
    """Import one split of a native dataset directory as canonical documents.

    ``split`` defaults to "test" when the directory path mentions test,
    otherwise "train".
    """
    path = Path(path)
    if not path.is_dir():
        raise ParseError(f"{path} is not a directory")
    if split is None:
        split = _infer_split(path)
    if format == "funsd":
        docs = _import_funsd(path, split, strict)
    elif format == "cord":
        docs = _import_cord(path, split, strict)
    elif format == "sroie":
        docs = _import_sroie(path, split, strict)
    else:
        raise UnsupportedFormat(f"unknown dataset format {format!r}; known: {FORMATS}")
    if not docs:
        raise ParseError(f"no {format} documents found under {path}")
    return docs


def _infer_split(path: Path) -> str:
    """Read the split off the trailing directory names (training_data, test, ...)."""
    for name in [p.name.lower() for p in (path, *path.parents[:1])]:
        if "train" in name:
            return "train"
        if "test" in name:
            return "test"
    return "train"


def _reject(doc_id: str, item_id: str, reason: str, strict: bool) -> None:
    message = f"{doc_id}: native record {item_id!r} rejected: {reason}"
    if strict:
        raise ParseError(message)
    logger.warning("%s", message)


def _safe_box(coords, doc_id: str, item_id: str, strict: bool) -> BoxRect | None:
    try:
        return BoxRect(*[int(c) for c in coords])
    except (ValidationError, TypeError, ValueError) as exc:
        _reject(doc_id, item_id, f"bad box {coords!r} ({exc})", strict)
        return None


# --- FUNSD -------------------------------------------------------------------


def _funsd_annotation_files(path: Path) -> list[Path]:
    for sub in ("annotations", "adjusted_annotations"):
        if (path / sub).is_dir():
            return sorted((path / sub).glob("*.json"))
    return sorted(path.glob("*.json"))


def _import_funsd(path: Path, split: str, strict: bool) -> list[Document]:
    docs = []
    for ann in _funsd_annotation_files(path):
        doc_id = ann.stem
        try:
            form = json.loads(ann.read_text(encoding="utf-8"))["form"]
        except (json.JSONDecodeError, KeyError, OSError) as exc:
            raise ParseError(f"{ann}: {exc}") from exc
        entities = []
        for item in form:
            item_id = str(item.get("id", len(entities)))
            text = str(item.get("text", ""))
            if not text.strip():
                _reject(doc_id, item_id, "empty text", strict)
                continue
            box = _safe_box(item.get("box", ()), doc_id, item_id, strict)
            if box is None:
                continue
            entities.append(
                Entity(
                    entity_id=f"e{item_id}",
                    text=text,
                    box=box,
                    gold_label=str(item.get("label", "other")).lower(),
                )
            )
        if not entities:
            _reject(doc_id, "-", "no usable entities", strict)
            continue
        docs.append(Document(doc_id=doc_id, split=split, entities=tuple(entities)))
    return docs


# --- CORD --------------------------------------------------------------------


def _cord_annotation_files(path: Path) -> list[Path]:
    if (path / "json").is_dir():
        return sorted((path / "json").glob("*.json"))
    return sorted(path.glob("*.json"))


def _quad_hull(words) -> tuple[int, int, int, int]:
    xs, ys = [], []
    for w in words:
        quad = w["quad"]
        xs.extend(float(quad[k]) for k in ("x1", "x2", "x3", "x4"))
        ys.extend(float(quad[k]) for k in ("y1", "y2", "y3", "y4"))
    import math

    return (
        math.floor(min(xs)),
        math.floor(min(ys)),
        math.ceil(max(xs)),
        math.ceil(max(ys)),
    )


def _import_cord(path: Path, split: str, strict: bool) -> list[Document]:
    docs = []
    for ann in _cord_annotation_files(path):
        doc_id = ann.stem
        try:
            payload = json.loads(ann.read_text(encoding="utf-8"))
            lines = payload["valid_line"]
        except (json.JSONDecodeError, KeyError, OSError) as exc:
            raise ParseError(f"{ann}: {exc}") from exc
        page = None
        size = payload.get("meta", {}).get("image_size")
        if size and size.get("width") and size.get("height"):
            page = (int(size["width"]), int(size["height"]))
        entities = []
        for idx, line in enumerate(lines):
            item_id = f"l{idx}"
            words = line.get("words") or []
            text = " ".join(str(w.get("text", "")).strip() for w in words).strip()
            if not text:
                _reject(doc_id, item_id, "empty text", strict)
                continue
            try:
                x1, y1, x2, y2 = _quad_hull(words)
            except (KeyError, TypeError, ValueError) as exc:
                _reject(doc_id, item_id, f"bad quad ({exc})", strict)
                continue
            x1, y1 = max(0, x1), max(0, y1)
            if page is not None:
                x2, y2 = min(page[0], x2), min(page[1], y2)
            box = _safe_box((x1, y1, max(x1, x2), max(y1, y2)), doc_id, item_id, strict)
            if box is None:
                continue
            entities.append(
                Entity(
                    entity_id=f"e{idx}",
                    text=text,
                    box=box,
                    gold_label=str(line.get("category", "other")),
                )
            )
        if not entities:
            _reject(doc_id, "-", "no usable entities", strict)
            continue
        docs.append(Document(doc_id=doc_id, split=split, entities=tuple(entities), page=page))
    return docs


# --- SROIE -------------------------------------------------------------------


def _sroie_pairs(path: Path) -> list[tuple[Path, Path | None]]:
    """Match OCR line files with their key-field files by stem."""
    box_dir = path / "box" if (path / "box").is_dir() else path
    key_dir = path / "entities" if (path / "entities").is_dir() else None
    pairs = []
    for ocr in sorted(box_dir.glob("*.txt")):
        key: Path | None = None
        if key_dir is not None:
            for cand in (key_dir / ocr.name, key_dir / f"{ocr.stem}.json"):
                if cand.is_file():
                    key = cand
                    break
        else:
            cand = ocr.with_suffix(".json")
            if cand.is_file():
                key = cand
        pairs.append((ocr, key))
    return pairs


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def _sroie_label(text: str, keys: dict[str, str]) -> str:
    norm = _normalize(text)
    for label in ("company", "date", "address", "total"):
        value = _normalize(keys.get(label, ""))
        if not value:
            continue
        if norm == value:
            return label
        if len(norm) >= 3 and norm in value:
            return label
        if len(value) >= 3 and value in norm:
            return label
    return "other"


def _import_sroie(path: Path, split: str, strict: bool) -> list[Document]:
    docs = []
    for ocr, key in _sroie_pairs(path):
        doc_id = ocr.stem
        keys: dict[str, str] = {}
        if key is not None:
            try:
                keys = {str(k): str(v) for k, v in json.loads(key.read_text(encoding="utf-8")).items()}
            except (json.JSONDecodeError, OSError) as exc:
                raise ParseError(f"{key}: {exc}") from exc
        entities = []
        try:
            raw_lines = ocr.read_text(encoding="utf-8", errors="replace").splitlines()
        except OSError as exc:
            raise ParseError(f"{ocr}: {exc}") from exc
        for idx, raw in enumerate(raw_lines):
            if not raw.strip():
                continue
            item_id = f"l{idx}"
            parts = raw.split(",", 8)
            if len(parts) < 9:
                _reject(doc_id, item_id, f"expected 8 coordinates + text: {raw!r}", strict)
                continue
            try:
                coords = [int(float(p)) for p in parts[:8]]
            except ValueError:
                _reject(doc_id, item_id, f"non-numeric coordinates: {raw!r}", strict)
                continue
            text = parts[8].strip()
            if not text:
                _reject(doc_id, item_id, "empty text", strict)
                continue
            xs, ys = coords[0::2], coords[1::2]
            box = _safe_box(
                (max(0, min(xs)), max(0, min(ys)), max(xs), max(ys)),
                doc_id,
                item_id,
                strict,
            )
            if box is None:
                continue
            entities.append(
                Entity(
                    entity_id=f"e{idx}",
                    text=text,
                    box=box,
                    gold_label=_sroie_label(text, keys),
                )
            )
        if not entities:
            _reject(doc_id, "-", "no usable entities", strict)
            continue
        docs.append(Document(doc_id=doc_id, split=split, entities=tuple(entities)))
    return docs
