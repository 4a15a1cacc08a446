"""End-to-end orchestration: indexing, per-document runs, decoupled evaluation.

A run processes each test document independently: select the three example
channels, assemble the prompt (asking the LLM for the layout analysis),
enforce the token budget, generate with validation, parse the completion,
and score it. Stage outputs are serialized under the output directory so
audits and re-evaluation never re-query a provider, and per-document
failures are recorded without stopping the run.
"""

from __future__ import annotations

import json
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .adapters import import_dataset
from .cache import FileCache, stable_hash
from .config import RunConfig, config_hash, validate_config
from .dataset import (
    Document,
    Entity,
    filter_semantic_entities,
    load_canonical,
    subsample_pool,
)
from .embedding import (
    EmbeddingCache,
    EmbeddingVector,
    HashEmbedder,
    HttpEmbeddingProvider,
    embed_documents,
    embed_entities,
)
from .errors import ConfigError, DociclError, IdMismatch
from .evaluation import Metrics, Prediction, parse_predictions, score_document
from .layout import BinaryLayoutImage, GrayLayoutImage, document_layout, export_layout_pgm
from .llm import (
    VALIDATORS,
    BudgetPolicy,
    HttpChatClient,
    LLMClient,
    LLMRequest,
    MockLLM,
    enforce_budget,
    generate_validated,
)
from .prompting import (
    DocRendering,
    EntityExample,
    PromptBundle,
    assemble,
    build_candidate_labels,
    build_doc_demos,
    build_entity_demos,
    build_layout_demos,
    build_question,
    doc_rendering,
)
from .schemas import get_schema
from .selection import (
    ExampleSelection,
    RankedExample,
    order_examples,
    select_layout_similar_docs,
    select_similar_entities,
    select_text_similar_docs,
    selection_to_obj,
)


@dataclass
class DocOutcome:
    doc_id: str
    status: str  # ok | error
    metrics: Metrics | None = None
    prediction: Prediction | None = None
    selection: ExampleSelection | None = None
    bundle: PromptBundle | None = None
    raw_completion: str = ""
    doc_examples_used: int = 0
    error: str = ""
    elapsed_ms: int = 0


@dataclass
class RunResult:
    report: dict
    outcomes: list[DocOutcome]
    out_dir: Path
    failed: int


def _qualified(doc_id: str, entity_id: str) -> str:
    return f"{doc_id}/{entity_id}"


class Pipeline:
    def __init__(self, cfg: RunConfig):
        validate_config(cfg)
        self.cfg = cfg
        self.schema = get_schema(cfg.dataset_name)
        self.file_cache = FileCache(cfg.cache_dir) if cfg.cache_dir else None
        embed_dir = Path(cfg.cache_dir) / "embeddings" if cfg.cache_dir else None
        self.embed_cache = EmbeddingCache(embed_dir)
        self.embedder = self._build_embedder()

        docs = self._load_documents()
        train = sorted((d for d in docs if d.split == "train"), key=lambda d: d.doc_id)
        if cfg.pool_limit > 0:
            train = subsample_pool(train, cfg.pool_limit, cfg.seed)
        self.train = train
        self.test = sorted((d for d in docs if d.split == "test"), key=lambda d: d.doc_id)
        if not self.train:
            raise ConfigError("dataset has no training documents to use as the example pool")
        self.by_id = {d.doc_id: d for d in [*self.train, *self.test]}

        self.llm = self._build_llm()

        # Pool entities: filtered, labeled, re-keyed with doc-qualified ids.
        self._pool_sources: dict[str, tuple[str, int]] = {}  # ref -> (doc_id, entity index)
        self.pool_entities: list[Entity] = []
        for d in self.train:
            index_of = {e.entity_id: i for i, e in enumerate(d.entities)}
            for e in filter_semantic_entities(d):
                if e.gold_label is None:
                    continue
                ref = _qualified(d.doc_id, e.entity_id)
                self._pool_sources[ref] = (d.doc_id, index_of[e.entity_id])
                self.pool_entities.append(replace(e, entity_id=ref))

        # Lazily built indexes.
        self._doc_vectors: dict[str, EmbeddingVector] | None = None
        self._pool_entity_vectors: dict[str, EmbeddingVector] | None = None
        self._layouts: dict[str, BinaryLayoutImage | GrayLayoutImage] | None = None
        self._renderings: dict[str, DocRendering] = {}
        self._fixed_selection: ExampleSelection | None = None
        self._analysis_mem: dict[str, str] = {}
        self._analysis_lock = threading.Lock()

    # --- construction helpers ---

    def _load_documents(self) -> list[Document]:
        cfg = self.cfg
        if cfg.dataset_format == "canonical":
            return load_canonical(cfg.dataset_path)
        return import_dataset(cfg.dataset_path, cfg.dataset_format)

    def _build_embedder(self):
        cfg = self.cfg
        if cfg.embedding_provider == "hash":
            return HashEmbedder(dim=cfg.embedding_dim, seed=cfg.embedding_seed)
        return HttpEmbeddingProvider(
            cfg.embedding_endpoint,
            token=cfg.api_key(),
            timeout=cfg.embedding_timeout,
            retries=cfg.embedding_retries,
        )

    def _build_llm(self) -> LLMClient:
        cfg = self.cfg
        if cfg.llm_provider == "mock":
            return MockLLM(
                mode=cfg.mock_llm_mode,
                fixed_text=cfg.mock_fixed_text,
                gold_documents=[*self.train, *self.test],
            )
        transcripts = Path(cfg.cache_dir) / "llm" if cfg.cache_dir else None
        return HttpChatClient(
            base_url=cfg.resolved_base_url(),
            api_key=cfg.api_key(),
            timeout=cfg.llm_timeout,
            retries=cfg.llm_retries,
            max_in_flight=cfg.max_in_flight,
            transcript_dir=transcripts,
        )

    def _llm_tag(self) -> str:
        cfg = self.cfg
        if cfg.llm_provider == "mock":
            return f"mock:{cfg.mock_llm_mode}"
        return f"http:{cfg.resolved_base_url()}:{cfg.llm_model}"

    # --- indexing ---

    def doc_vectors(self) -> dict[str, EmbeddingVector]:
        if self._doc_vectors is None:
            self._doc_vectors = embed_documents(
                [*self.train, *self.test], self.embedder, self.embed_cache
            )
        return self._doc_vectors

    def pool_entity_vectors(self) -> dict[str, EmbeddingVector]:
        if self._pool_entity_vectors is None:
            self._pool_entity_vectors = embed_entities(
                self.pool_entities, self.embedder, self.embed_cache
            )
        return self._pool_entity_vectors

    def _layout_key(self, doc: Document) -> str:
        cfg = self.cfg
        boxes = json.dumps([b.as_list() for b in doc.boxes()])
        return stable_hash(
            doc.doc_id,
            cfg.resize_method,
            f"{cfg.resize_width}x{cfg.resize_height}",
            str(cfg.crop_margin),
            boxes,
        )

    def _layout_for(self, doc: Document) -> BinaryLayoutImage | GrayLayoutImage:
        cfg = self.cfg
        binary = cfg.resize_method in ("lanczos_binarize", "coord_rescale")
        if self.file_cache is not None:
            arr = self.file_cache.get_array("layouts", self._layout_key(doc))
            if arr is not None:
                return BinaryLayoutImage(arr) if binary else GrayLayoutImage(arr)
        img, _ = document_layout(
            doc,
            target=(cfg.resize_width, cfg.resize_height),
            method=cfg.resize_method,
            margin=cfg.crop_margin,
        )
        if self.file_cache is not None:
            self.file_cache.put_array("layouts", self._layout_key(doc), img.pixels)
        return img

    def layouts(self) -> dict[str, BinaryLayoutImage | GrayLayoutImage]:
        if self._layouts is None:
            self._layouts = {d.doc_id: self._layout_for(d) for d in [*self.train, *self.test]}
        return self._layouts

    def rendering(self, doc_id: str) -> DocRendering:
        if doc_id not in self._renderings:
            self._renderings[doc_id] = doc_rendering(
                self.by_id[doc_id], self.cfg.box_source, self.cfg.crop_margin
            )
        return self._renderings[doc_id]

    def index(self, pgm_dir: str | Path | None = None) -> dict:
        """Build (and cache) every derived artifact the run stage needs."""
        vectors = self.doc_vectors()
        entity_vectors = self.pool_entity_vectors()
        layouts = self.layouts()
        for d in self.test:
            self.test_entity_vectors(d)
        if pgm_dir is not None or self.cfg.export_pgm:
            target = Path(pgm_dir) if pgm_dir is not None else Path(self.cfg.out_dir) / "layouts"
            for doc_id, img in layouts.items():
                if isinstance(img, BinaryLayoutImage):
                    export_layout_pgm(img, target, doc_id)
        return {
            "documents": len(self.by_id),
            "document_vectors": len(vectors),
            "pool_entity_vectors": len(entity_vectors),
            "layout_images": len(layouts),
        }

    def test_entity_vectors(self, doc: Document) -> dict[str, EmbeddingVector]:
        return embed_entities(filter_semantic_entities(doc), self.embedder, self.embed_cache)

    # --- selection ---

    def _train_ids(self) -> list[str]:
        return [d.doc_id for d in self.train]

    def selection_for(self, doc: Document) -> ExampleSelection:
        """Best-first selection of the three channels for one test document."""
        cfg = self.cfg
        if cfg.fixed_examples:
            sel = self._fixed()
            return ExampleSelection(
                test_doc_id=doc.doc_id,
                text_docs=list(sel.text_docs),
                layout_docs=list(sel.layout_docs),
                entity_examples={
                    e.entity_id: list(next(iter(sel.entity_examples.values()), []))
                    for e in filter_semantic_entities(doc)
                },
            )
        doc_vectors = self.doc_vectors()
        train_ids = set(self._train_ids())
        doc_pool = {i: v for i, v in doc_vectors.items() if i in train_ids or i == doc.doc_id}
        text_docs = select_text_similar_docs(doc.doc_id, doc_pool, cfg.n_doc_examples)

        layouts = self.layouts()
        layout_pool = {i: img for i, img in layouts.items() if i in train_ids or i == doc.doc_id}
        layout_docs = select_layout_similar_docs(
            doc.doc_id, layout_pool, cfg.n_doc_examples, cfg.layout_metric
        )

        test_entities = filter_semantic_entities(doc)
        entity_examples: dict[str, list[RankedExample]] = {}
        if test_entities and self.pool_entities:
            entity_examples = select_similar_entities(
                test_entities,
                self.pool_entities,
                self.test_entity_vectors(doc),
                self.pool_entity_vectors(),
                cfg.n_entity_examples,
            )
        return ExampleSelection(
            test_doc_id=doc.doc_id,
            text_docs=text_docs,
            layout_docs=layout_docs,
            entity_examples=entity_examples,
        )

    def _fixed(self) -> ExampleSelection:
        """One seeded random selection reused for every test document."""
        if self._fixed_selection is None:
            rng = random.Random(self.cfg.seed)
            ids = self._train_ids()
            n_doc = min(self.cfg.n_doc_examples, len(ids))
            text = [RankedExample(i, 0.0, "text_doc") for i in rng.sample(ids, n_doc)]
            lay = [RankedExample(i, 0.0, "layout") for i in rng.sample(ids, n_doc)]
            refs = [e.entity_id for e in self.pool_entities]
            n_ent = min(self.cfg.n_entity_examples, len(refs))
            ents = [RankedExample(r, 0.0, "text_ent") for r in rng.sample(refs, n_ent)]
            self._fixed_selection = ExampleSelection(
                test_doc_id="",
                text_docs=text,
                layout_docs=lay,
                entity_examples={"*": ents},
            )
        return self._fixed_selection

    # --- prompting ---

    def _resolve_entity_examples(
        self, doc: Document, selection: ExampleSelection
    ) -> list[EntityExample]:
        out: list[EntityExample] = []
        for test_e in filter_semantic_entities(doc):
            for ranked in selection.entity_examples.get(test_e.entity_id, []):
                donor_id, idx = self._pool_sources[ranked.ref_id]
                rendering = self.rendering(donor_id)
                out.append(
                    EntityExample(entity=rendering.doc.entities[idx], box=rendering.boxes[idx])
                )
        return out

    def _analysis_ask(self, request_text: str) -> str:
        """Layout-analysis replies, cached per (request text, provider, model)."""
        key = stable_hash("analysis", self._llm_tag(), self.cfg.llm_model, request_text)
        with self._analysis_lock:
            if key in self._analysis_mem:
                return self._analysis_mem[key]
        if self.file_cache is not None:
            hit = self.file_cache.get_json("analysis", key)
            if hit is not None:
                with self._analysis_lock:
                    self._analysis_mem[key] = hit["reply"]
                return hit["reply"]
        reply = self.llm.complete(
            LLMRequest(
                prompt=request_text,
                max_output_tokens=self.cfg.resolved_max_output_tokens(),
                temperature=self.cfg.llm_temperature,
                model_id=self.cfg.llm_model,
            )
        )
        with self._analysis_lock:
            self._analysis_mem[key] = reply
        if self.file_cache is not None:
            self.file_cache.put_json("analysis", key, {"reply": reply})
        return reply

    def build_bundle(
        self, doc: Document, selection: ExampleSelection, doc_count: int | None = None
    ) -> PromptBundle:
        """Assemble the prompt for one test document from a best-first selection."""
        cfg = self.cfg
        count = cfg.n_doc_examples if doc_count is None else doc_count
        trimmed = ExampleSelection(
            test_doc_id=selection.test_doc_id,
            text_docs=selection.text_docs[:count],
            layout_docs=selection.layout_docs[:count],
            entity_examples=selection.entity_examples,
        )
        ordered = order_examples(trimmed, cfg.example_order)

        c_cl = build_candidate_labels(self.schema)
        c_et = ""
        if not cfg.disable_entity_demos:
            examples = self._resolve_entity_examples(doc, ordered)
            if examples:
                c_et = build_entity_demos(examples, cfg.entity_demo_format)
        c_l = ""
        if not cfg.disable_layout_demos and ordered.layout_docs:
            renderings = [self.rendering(r.ref_id) for r in ordered.layout_docs]
            c_l, _ = build_layout_demos(renderings, self._analysis_ask)
        c_dt = ""
        if not cfg.disable_doc_demos and ordered.text_docs:
            c_dt = build_doc_demos([self.rendering(r.ref_id) for r in ordered.text_docs])
        question = build_question(self.rendering(doc.doc_id))
        n_entity_examples = sum(len(v) for v in ordered.entity_examples.values())
        return assemble(
            c_cl, c_et, c_l, c_dt, question, example_counts=(count, n_entity_examples)
        )

    # --- running ---

    def _process_doc(self, doc: Document) -> DocOutcome:
        cfg = self.cfg
        started = time.monotonic()
        try:
            selection = self.selection_for(doc)
            bundle = self.build_bundle(doc, selection)
            if cfg.max_prompt_tokens > 0:
                policy = BudgetPolicy(
                    max_prompt_tokens=cfg.max_prompt_tokens,
                    doc_example_fallback=cfg.resolved_fallback(),
                    max_regen_attempts=cfg.max_regen_attempts,
                )
                bundle = enforce_budget(
                    bundle, policy, lambda k: self.build_bundle(doc, selection, k)
                )
            raw = generate_validated(
                self.llm,
                LLMRequest(
                    prompt=bundle.text,
                    max_output_tokens=cfg.resolved_max_output_tokens(),
                    temperature=cfg.llm_temperature,
                    model_id=cfg.llm_model,
                ),
                VALIDATORS[cfg.validator],
                cfg.max_regen_attempts,
            )
            cropped = self.rendering(doc.doc_id).boxes if cfg.box_source == "cropped" else None
            prediction = parse_predictions(raw, doc, cropped)
            metrics = score_document(
                prediction,
                doc,
                exclude_labels=("other",) if cfg.exclude_other else (),
                case_insensitive=not cfg.strict_labels,
            )
            return DocOutcome(
                doc_id=doc.doc_id,
                status="ok",
                metrics=metrics,
                prediction=prediction,
                selection=selection,
                bundle=bundle,
                raw_completion=raw,
                doc_examples_used=bundle.example_counts[0],
                elapsed_ms=int((time.monotonic() - started) * 1000),
            )
        except DociclError as exc:
            return DocOutcome(
                doc_id=doc.doc_id,
                status="error",
                error=f"{type(exc).__name__}: {exc}",
                elapsed_ms=int((time.monotonic() - started) * 1000),
            )

    def run(self, out_dir: str | Path | None = None) -> RunResult:
        from .report import build_report, write_report_files

        cfg = self.cfg
        if not self.test:
            raise ConfigError("dataset has no test documents")
        out = Path(out_dir) if out_dir is not None else Path(cfg.out_dir)
        self.index()
        workers = cfg.resolved_workers()
        if workers <= 1:
            outcomes = [self._process_doc(d) for d in self.test]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(self._process_doc, self.test))
        outcomes.sort(key=lambda o: o.doc_id)

        self._write_artifacts(out, outcomes)
        scored = [(o.doc_id, o.metrics) for o in outcomes if o.status == "ok"]
        report = build_report(cfg, scored, model_id=self._llm_tag())
        write_report_files(report, out, figures=cfg.figures)
        failed = sum(1 for o in outcomes if o.status != "ok")
        return RunResult(report=report, outcomes=outcomes, out_dir=out, failed=failed)

    def _write_artifacts(self, out: Path, outcomes: list[DocOutcome]) -> None:
        artifacts = out / "artifacts"
        artifacts.mkdir(parents=True, exist_ok=True)
        manifest_lines = [
            json.dumps(
                {"type": "run", "config_hash": config_hash(self.cfg), "model": self._llm_tag()},
                ensure_ascii=False,
            )
        ]
        for o in outcomes:
            if o.status == "ok":
                payload = {
                    "doc_id": o.doc_id,
                    "selection": selection_to_obj(o.selection),
                    "prompt": o.bundle.text,
                    "token_estimate": o.bundle.token_estimate,
                    "raw_completion": o.raw_completion,
                    "prediction": {
                        "labels": dict(sorted(o.prediction.labels.items())),
                        "unmatched_output_lines": o.prediction.unmatched_output_lines,
                    },
                    "metrics": {
                        "true_positives": o.metrics.true_positives,
                        "predicted_count": o.metrics.predicted_count,
                        "gold_count": o.metrics.gold_count,
                        "precision": o.metrics.precision,
                        "recall": o.metrics.recall,
                        "f1": o.metrics.f1,
                    },
                }
                path = artifacts / f"{o.doc_id}.json"
                path.write_text(
                    json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
                )
            manifest_lines.append(
                json.dumps(
                    {
                        "type": "doc",
                        "doc_id": o.doc_id,
                        "status": o.status,
                        "artifact": f"artifacts/{o.doc_id}.json" if o.status == "ok" else None,
                        "doc_examples_used": o.doc_examples_used,
                        "error": o.error or None,
                        "elapsed_ms": o.elapsed_ms,
                    },
                    ensure_ascii=False,
                )
            )
        (out / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")


# --- decoupled evaluation ------------------------------------------------------


def evaluate_run(run_dir: str | Path, documents: list[Document], cfg: RunConfig) -> dict:
    """Recompute the report from the predictions stored by a previous run.

    Matching already happened at parse time; stored labels are keyed by
    entity id, so scoring needs only the gold documents.
    """
    from .report import build_report

    run_dir = Path(run_dir)
    gold = {d.doc_id: d for d in documents if d.split == "test"}
    artifacts = sorted((run_dir / "artifacts").glob("*.json"))
    per_doc: dict[str, Metrics] = {}
    for path in artifacts:
        payload = json.loads(path.read_text(encoding="utf-8"))
        doc_id = payload["doc_id"]
        if doc_id not in gold:
            raise IdMismatch(f"prediction for unknown document {doc_id!r}")
        prediction = Prediction(doc_id=doc_id, labels=dict(payload["prediction"]["labels"]))
        doc = gold[doc_id]
        per_doc[doc_id] = score_document(
            prediction,
            doc,
            exclude_labels=("other",) if cfg.exclude_other else (),
            case_insensitive=not cfg.strict_labels,
        )
    scored = []
    for doc_id, doc in sorted(gold.items()):
        if doc_id in per_doc:
            scored.append((doc_id, per_doc[doc_id]))
        else:
            # Documents the run never predicted count as all-miss.
            empty = Prediction(doc_id=doc_id)
            scored.append(
                (
                    doc_id,
                    score_document(
                        empty,
                        doc,
                        exclude_labels=("other",) if cfg.exclude_other else (),
                        case_insensitive=not cfg.strict_labels,
                    ),
                )
            )
    return build_report(cfg, scored, model_id="stored-predictions")
