"""Run configuration: the plain-text key=value file format and its defaults.

A config file holds ``key = value`` lines; blank lines and ``#`` comments are
ignored. Unknown keys are a configuration error. Every field of RunConfig is
a key; list-valued fields take comma-separated values and booleans take
true/false. The per-dataset files under ``configs/`` encode the benchmark
defaults (token limits, fallback counts).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

ENV_API_KEY = "DOCICL_API_KEY"
ENV_BASE_URL = "DOCICL_BASE_URL"


@dataclass
class RunConfig:
    # dataset
    dataset_path: str = ""
    dataset_format: str = "canonical"  # canonical | funsd | cord | sroie
    dataset_name: str = "toy"  # names the label schema and output-token default
    pool_limit: int = 0  # 0 = use the full training pool
    # embedding provider
    embedding_provider: str = "hash"  # hash | http
    embedding_dim: int = 256
    embedding_seed: int = 0
    embedding_endpoint: str = ""
    embedding_timeout: float = 30.0
    embedding_retries: int = 2
    # llm provider
    llm_provider: str = "mock"  # mock | http
    mock_llm_mode: str = "echo_gold"
    mock_fixed_text: str = "OK"
    llm_model: str = "mock"
    llm_temperature: float = 0.0
    llm_base_url: str = ""
    llm_retries: int = 3
    llm_timeout: float = 120.0
    max_in_flight: int = 4
    # selection
    n_doc_examples: int = 4
    n_entity_examples: int = 4
    example_order: str = "descending"
    fixed_examples: bool = False
    # layout
    layout_metric: str = "mse"
    resize_width: int = 256
    resize_height: int = 256
    resize_method: str = "lanczos_binarize"
    crop_margin: int = 10
    # prompt
    box_source: str = "cropped"  # cropped | original
    entity_demo_format: str = "box"  # box | bare
    disable_entity_demos: bool = False
    disable_layout_demos: bool = False
    disable_doc_demos: bool = False
    # budget and generation
    max_prompt_tokens: int = 0  # 0 = no budget enforcement
    doc_example_fallback: tuple[int, ...] = ()  # empty = just n_doc_examples
    max_output_tokens: int = 0  # 0 = dataset default, or 1500 if unknown
    max_regen_attempts: int = 3
    validator: str = "strict"  # strict | brace
    # evaluation
    exclude_other: bool = False
    strict_labels: bool = False
    # run plumbing
    seed: int = 0
    cache_dir: str = ""
    out_dir: str = "runs/out"
    workers: int = 0  # 0 = min(4, cpu count)
    figures: bool = True
    export_pgm: bool = False

    def resolved_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        return min(4, os.cpu_count() or 1)

    def resolved_fallback(self) -> tuple[int, ...]:
        return self.doc_example_fallback or (self.n_doc_examples,)

    def resolved_max_output_tokens(self) -> int:
        if self.max_output_tokens > 0:
            return self.max_output_tokens
        from .llm import OUTPUT_TOKEN_LIMITS

        return OUTPUT_TOKEN_LIMITS.get(self.dataset_name, 1500)

    def api_key(self) -> str | None:
        return os.environ.get(ENV_API_KEY)

    def resolved_base_url(self) -> str:
        return self.llm_base_url or os.environ.get(ENV_BASE_URL, "")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    declared = _FIELD_TYPES[key]
    raw = raw.strip()
    if declared == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if declared == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if declared == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if declared.startswith("tuple"):
        if not raw:
            return ()
        try:
            return tuple(int(v.strip()) for v in raw.split(","))
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        setattr(cfg, key, _parse_value(key, raw))
    return cfg


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)


def config_hash(cfg: RunConfig) -> str:
    """Stable hash over every config field (environment secrets excluded)."""
    lines = []
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name}={value}")
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def validate_config(cfg: RunConfig) -> None:
    if not cfg.dataset_path:
        raise ConfigError("dataset_path is required")
    if cfg.dataset_format not in ("canonical", "funsd", "cord", "sroie"):
        raise ConfigError(f"unknown dataset_format {cfg.dataset_format!r}")
    if cfg.embedding_provider not in ("hash", "http"):
        raise ConfigError(f"unknown embedding_provider {cfg.embedding_provider!r}")
    if cfg.embedding_provider == "http" and not cfg.embedding_endpoint:
        raise ConfigError("embedding_provider=http requires embedding_endpoint")
    if cfg.llm_provider not in ("mock", "http"):
        raise ConfigError(f"unknown llm_provider {cfg.llm_provider!r}")
    if cfg.llm_provider == "http" and not cfg.resolved_base_url():
        raise ConfigError(f"llm_provider=http requires llm_base_url or ${ENV_BASE_URL}")
    if cfg.example_order not in ("ascending", "descending"):
        raise ConfigError(f"unknown example_order {cfg.example_order!r}")
    if cfg.layout_metric not in ("mse", "ssim", "cosine"):
        raise ConfigError(f"unknown layout_metric {cfg.layout_metric!r}")
    if cfg.box_source not in ("cropped", "original"):
        raise ConfigError(f"unknown box_source {cfg.box_source!r}")
    if cfg.entity_demo_format not in ("box", "bare"):
        raise ConfigError(f"unknown entity_demo_format {cfg.entity_demo_format!r}")
    if cfg.validator not in ("strict", "brace"):
        raise ConfigError(f"unknown validator {cfg.validator!r}")
    if cfg.resize_width < 1 or cfg.resize_height < 1:
        raise ConfigError("resize target must be positive")
    if cfg.n_doc_examples < 1 or cfg.n_entity_examples < 1:
        raise ConfigError("example counts must be >= 1")
    fallback = cfg.resolved_fallback()
    if any(a <= b for a, b in zip(fallback, fallback[1:])) or fallback[-1] < 1:
        raise ConfigError(f"doc_example_fallback must be strictly decreasing, got {fallback}")
