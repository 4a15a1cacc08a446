"""Five-part prompt assembly: labels, entity demos, layout demos, doc demos, question.

The assembled prompt concatenates, in fixed order and separated by blank
lines: the candidate-label list, entity-level demonstrations, layout
demonstrations (which embed an LLM-written layout analysis), document-level
question/answer demonstrations, and the test question. Any part may be empty
for ablations; the order of the remaining parts never changes.

This module also owns the entity-line grammar. A demonstration line is

    {text: "TOTAL", Box: [20,10,50,40], entity: total}

and a question line is the same without the entity field. Double quotes and
backslashes inside the text are backslash-escaped. Boxes default to the
cropped-frame coordinates (B-prime).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

from .dataset import BoxRect, Document, Entity, LabelSchema
from .errors import LengthMismatch, MissingLabel
from .layout import DEFAULT_MARGIN, crop_with_margin

# Fixed instruction strings; the three appear verbatim in every prompt.
P_ENTITY_DEMOS = "Sample text and corresponding label:"
P_LAYOUT_ANALYSIS = (
    "These are the information extracted from the document through OCR, "
    "and the Box is the position of the text in the document. "
    "Please analyze where each label is generally located in the document."
)
P_QUESTION = "What are the labels for these texts?"

BOX_SOURCES = ("cropped", "original")
ENTITY_DEMO_FORMATS = ("box", "bare")

# Tolerant parse form of the grammar: optional whitespace around the
# punctuation, optional Box group (some models drop it when echoing).
ENTITY_LINE_RE = re.compile(
    r"\{\s*text\s*:\s*\"((?:\\.|[^\"\\])*)\""
    r"(?:\s*,\s*Box\s*:\s*\[\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\])?"
    r"(?:\s*,\s*entity\s*:\s*([^,{}\n]*?))?"
    r"\s*\}"
)


def escape_text(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def unescape_text(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text)


def render_entity_line(
    entity: Entity,
    box_source: str = "cropped",
    cropped_box: BoxRect | None = None,
    with_label: bool = True,
) -> str:
    """Render one entity in the prompt grammar.

    With ``box_source="cropped"`` the caller supplies the entity's box in the
    cropped frame; "original" uses the page-coordinate box the entity carries.
    Demo lines (``with_label=True``) require a gold label.
    """
    if box_source not in BOX_SOURCES:
        raise ValueError(f"box_source must be one of {BOX_SOURCES}, got {box_source!r}")
    if box_source == "cropped":
        if cropped_box is None:
            raise ValueError("box_source='cropped' requires the cropped box")
        box = cropped_box
    else:
        box = entity.box
    text = escape_text(entity.text)
    coords = f"[{box.x1},{box.y1},{box.x2},{box.y2}]"
    if with_label:
        if entity.gold_label is None:
            raise MissingLabel(f"entity {entity.entity_id!r} has no gold label for a demo line")
        return f'{{text: "{text}", Box: {coords}, entity: {entity.gold_label}}}'
    return f'{{text: "{text}", Box: {coords}}}'


def render_entity_line_bare(entity: Entity) -> str:
    """The box-free ablation form for entity demos: ``text: label``."""
    if entity.gold_label is None:
        raise MissingLabel(f"entity {entity.entity_id!r} has no gold label for a demo line")
    return f"{entity.text}: {entity.gold_label}"


@dataclass(frozen=True)
class DocRendering:
    """A document paired with the per-entity boxes chosen for rendering."""

    doc: Document
    boxes: tuple[BoxRect, ...]

    def __post_init__(self):
        if len(self.boxes) != self.doc.n_entities:
            raise LengthMismatch(
                f"document {self.doc.doc_id!r}: {len(self.boxes)} boxes for "
                f"{self.doc.n_entities} entities"
            )

    def demo_lines(self) -> list[str]:
        return [
            render_entity_line(e, "cropped", cropped_box=b, with_label=True)
            for e, b in zip(self.doc.entities, self.boxes)
        ]

    def question_lines(self) -> list[str]:
        return [
            render_entity_line(e, "cropped", cropped_box=b, with_label=False)
            for e, b in zip(self.doc.entities, self.boxes)
        ]


def doc_rendering(
    doc: Document, box_source: str = "cropped", margin: int = DEFAULT_MARGIN
) -> DocRendering:
    """Resolve a document's rendering boxes (cropped-frame by default)."""
    if box_source == "original":
        return DocRendering(doc, tuple(doc.boxes()))
    cropped, _ = crop_with_margin(doc.boxes(), margin)
    return DocRendering(doc, tuple(cropped))


@dataclass(frozen=True)
class EntityExample:
    """A donor entity resolved for rendering, with its chosen box."""

    entity: Entity
    box: BoxRect


@dataclass(frozen=True)
class LayoutAnalysis:
    """The LLM's free-text reply to the layout-analysis instruction."""

    source_doc_ids: tuple[str, ...]
    analysis_text: str

    def __post_init__(self):
        if not self.analysis_text.strip():
            raise ValueError("layout analysis text is empty")


# --- the five parts -----------------------------------------------------------


def build_candidate_labels(schema: LabelSchema) -> str:
    """One line per label: the code, plus its description when present."""
    lines = []
    for code, description in schema.labels:
        lines.append(f"{code}: {description}" if description else code)
    return "\n".join(lines)


def build_entity_demos(examples: Sequence[EntityExample], fmt: str = "box") -> str:
    """Header plus one demonstration line per retrieved entity example."""
    if fmt not in ENTITY_DEMO_FORMATS:
        raise ValueError(f"fmt must be one of {ENTITY_DEMO_FORMATS}, got {fmt!r}")
    if not examples:
        return ""
    if fmt == "bare":
        lines = [render_entity_line_bare(ex.entity) for ex in examples]
    else:
        lines = [
            render_entity_line(ex.entity, "cropped", cropped_box=ex.box, with_label=True)
            for ex in examples
        ]
    return P_ENTITY_DEMOS + "\n" + "\n".join(lines)


def build_layout_demos(
    layout_docs: Sequence[DocRendering],
    ask: Callable[[str], str],
) -> tuple[str, LayoutAnalysis]:
    """Labeled lines of the layout-similar documents, the analysis instruction,
    and the LLM's analysis reply, concatenated in that order.

    ``ask`` maps the analysis request text to the model's reply; client errors
    propagate unchanged.
    """
    if not layout_docs:
        raise ValueError("build_layout_demos needs at least one layout document")
    blocks = ["\n".join(r.demo_lines()) for r in layout_docs]
    y_l = "\n\n".join(blocks)
    analysis_request = y_l + "\n" + P_LAYOUT_ANALYSIS
    reply = ask(analysis_request)
    analysis = LayoutAnalysis(
        source_doc_ids=tuple(r.doc.doc_id for r in layout_docs),
        analysis_text=reply,
    )
    return analysis_request + "\n" + reply, analysis


def build_doc_demos(text_docs: Sequence[DocRendering]) -> str:
    """Question/answer block per document: its lines, the question, the answers."""
    blocks = []
    for r in text_docs:
        blocks.append(
            "\n".join(r.question_lines()) + "\n" + P_QUESTION + "\n" + "\n".join(r.demo_lines())
        )
    return "\n\n".join(blocks)


def build_question(test: DocRendering) -> str:
    """The test document's question-form lines followed by the question string."""
    return "\n".join(test.question_lines()) + "\n" + P_QUESTION


# --- assembly -------------------------------------------------------------------


def default_token_estimator(text: str) -> int:
    """ceil(character count / 4); a provider tokenizer can replace this."""
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class PromptBundle:
    """The five prompt parts plus the token estimate of their concatenation."""

    c_cl: str
    c_et: str
    c_l: str
    c_dt: str
    question: str
    token_estimate: int
    example_counts: tuple[int, int] = (0, 0)  # (documents per channel, entity demos)

    @property
    def text(self) -> str:
        parts = [p for p in (self.c_cl, self.c_et, self.c_l, self.c_dt, self.question) if p]
        return "\n\n".join(parts)


def assemble(
    c_cl: str,
    c_et: str,
    c_l: str,
    c_dt: str,
    question: str,
    estimator: Callable[[str], int] | None = None,
    example_counts: tuple[int, int] = (0, 0),
) -> PromptBundle:
    """Concatenate the parts in template order; empty parts are omitted."""
    estimator = estimator or default_token_estimator
    text = "\n\n".join(p for p in (c_cl, c_et, c_l, c_dt, question) if p)
    return PromptBundle(
        c_cl=c_cl,
        c_et=c_et,
        c_l=c_l,
        c_dt=c_dt,
        question=question,
        token_estimate=estimator(text),
        example_counts=example_counts,
    )
