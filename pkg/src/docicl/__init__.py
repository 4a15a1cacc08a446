"""Sample-centric in-context example selection for document information extraction.

For each test document, the pipeline retrieves layout-similar documents,
text-similar documents, and text-similar entities from a labeled pool,
assembles them into a five-part prompt, asks a chat-completion model for the
entity labels, and scores the parsed answers at entity level.
"""

from importlib import resources
from pathlib import Path

from .dataset import (
    BoxRect,
    Document,
    Entity,
    LabelSchema,
    filter_semantic_entities,
    load_canonical,
    save_canonical,
    subsample_pool,
    synthesize_replace_layout,
    synthesize_replace_text,
)
from .config import RunConfig, config_hash, load_config
from .pipeline import Pipeline

__version__ = "0.1.0"

__all__ = [
    "BoxRect",
    "Document",
    "Entity",
    "LabelSchema",
    "Pipeline",
    "RunConfig",
    "config_hash",
    "filter_semantic_entities",
    "load_canonical",
    "load_config",
    "save_canonical",
    "subsample_pool",
    "synthesize_replace_layout",
    "synthesize_replace_text",
    "toy_dataset_path",
]


def toy_dataset_path() -> Path:
    """Path of the bundled 10-document toy dataset (canonical format)."""
    return Path(resources.files("docicl") / "data" / "toy.jsonl")
