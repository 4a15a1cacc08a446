"""Chat-completion clients: HTTP provider, deterministic mock, validation, budgets.

The HTTP client speaks the common chat-completion JSON shape (model, messages,
temperature, max_tokens), so any endpoint honoring it works, including local
servers. Real-provider calls are recorded one JSON file per request hash so
runs replay without re-querying.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from .dataset import Document
from .errors import (
    BudgetUnsatisfiable,
    ContextOverflow,
    MalformedOutput,
    RateLimited,
    TransportError,
    UnknownDataset,
)
from .prompting import (
    ENTITY_LINE_RE,
    P_LAYOUT_ANALYSIS,
    P_QUESTION,
    PromptBundle,
    unescape_text,
)

MOCK_MODES = ("echo_gold", "fixed_text", "scripted")

# Maximum completion length per dataset, as configured for the benchmarks.
OUTPUT_TOKEN_LIMITS = {"funsd": 2500, "cord": 1500, "sroie": 1500}


@dataclass(frozen=True)
class LLMRequest:
    prompt: str
    max_output_tokens: int
    temperature: float = 0.0
    model_id: str = ""

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError(f"max_output_tokens must be >= 1, got {self.max_output_tokens}")

    def request_hash(self) -> str:
        key = "\x1f".join(
            (self.model_id, repr(self.temperature), str(self.max_output_tokens), self.prompt)
        )
        return hashlib.sha256(key.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BudgetPolicy:
    """Prompt-token ceiling plus the ordered document-example fallback counts."""

    max_prompt_tokens: int
    doc_example_fallback: tuple[int, ...]
    max_regen_attempts: int = 3

    def __post_init__(self):
        counts = tuple(self.doc_example_fallback)
        object.__setattr__(self, "doc_example_fallback", counts)
        if not counts or counts[-1] < 1:
            raise ValueError("fallback list must be non-empty with last count >= 1")
        if any(a <= b for a, b in zip(counts, counts[1:])):
            raise ValueError(f"fallback list must be strictly decreasing, got {counts}")
        if self.max_regen_attempts < 1:
            raise ValueError("max_regen_attempts must be >= 1")


def default_output_limits(dataset: str) -> int:
    try:
        return OUTPUT_TOKEN_LIMITS[dataset]
    except KeyError:
        raise UnknownDataset(
            f"no output-token default for {dataset!r}; known: {sorted(OUTPUT_TOKEN_LIMITS)}"
        ) from None


class LLMClient:
    """Interface: complete one request, returning the raw completion text."""

    def complete(self, req: LLMRequest) -> str:
        raise NotImplementedError


# --- deterministic mock ---------------------------------------------------------


class MockLLM(LLMClient):
    """Offline client for tests and dry runs.

    fixed_text: always the configured reply. scripted: replies from a
    per-call sequence (sticking at the last entry) or from a map of prompt
    sha256 hashes. echo_gold: identifies the test document by the text
    sequence of the question lines at the end of the prompt and answers
    every entity with its gold label, echoing the question's boxes.
    """

    def __init__(
        self,
        mode: str = "fixed_text",
        fixed_text: str = "OK",
        script: Sequence[str] | dict[str, str] | None = None,
        gold_documents: Sequence[Document] = (),
    ):
        if mode not in MOCK_MODES:
            raise ValueError(f"mode must be one of {MOCK_MODES}, got {mode!r}")
        self.mode = mode
        self.fixed_text = fixed_text
        self.script = script
        self.calls = 0
        self._gold_by_texts = {
            tuple(e.text for e in doc.entities): doc for doc in gold_documents
        }
        self._lock = threading.Lock()

    def complete(self, req: LLMRequest) -> str:
        with self._lock:
            call_index = self.calls
            self.calls += 1
        if self.mode == "fixed_text":
            return self.fixed_text
        if self.mode == "scripted":
            if isinstance(self.script, dict):
                key = hashlib.sha256(req.prompt.encode("utf-8")).hexdigest()
                try:
                    return self.script[key]
                except KeyError:
                    raise TransportError(f"scripted mock has no reply for prompt hash {key}") from None
            if not self.script:
                raise TransportError("scripted mock has an empty script")
            return self.script[min(call_index, len(self.script) - 1)]
        return self._echo_gold(req.prompt)

    # Canned reply for the embedded layout-analysis request.
    ANALYSIS_REPLY = (
        "Company names sit at the top, addresses just below them, and totals "
        "appear near the bottom next to their amounts."
    )

    def _echo_gold(self, prompt: str) -> str:
        if prompt.rstrip().endswith(P_LAYOUT_ANALYSIS):
            return self.ANALYSIS_REPLY
        lines = prompt.splitlines()
        # The prompt ends with the question: entity lines then the instruction.
        end = len(lines)
        while end > 0 and not lines[end - 1].strip():
            end -= 1
        if end == 0 or lines[end - 1].strip() != P_QUESTION:
            raise TransportError("echo_gold mock: prompt does not end with the question string")
        question: list[tuple[str, str]] = []  # (rendered text, rendered box part)
        i = end - 2
        while i >= 0:
            m = ENTITY_LINE_RE.fullmatch(lines[i].strip())
            if m is None or m.group(6) is not None:
                break
            question.append((m.group(1), lines[i].strip()))
            i -= 1
        question.reverse()
        if not question:
            raise TransportError("echo_gold mock: no question lines found")
        texts = tuple(unescape_text(t) for t, _ in question)
        doc = self._gold_by_texts.get(texts)
        if doc is None:
            raise TransportError("echo_gold mock: question does not match any gold document")
        out = []
        for (_, rendered), entity in zip(question, doc.entities):
            if entity.gold_label is None:
                raise TransportError(
                    f"echo_gold mock: entity {entity.entity_id!r} in {doc.doc_id!r} has no gold label"
                )
            out.append(rendered[:-1] + f", entity: {entity.gold_label}}}")
        return "\n".join(out)


# --- HTTP client ------------------------------------------------------------------


class HttpChatClient(LLMClient):
    """Chat-completion endpoint client with retries, backoff, and transcripts."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        transcript_dir: str | Path | None = None,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self._headers = {"Content-Type": "application/json"}
        if api_key:
            self._headers["Authorization"] = f"Bearer {api_key}"
        self._timeout = timeout
        self._retries = retries
        self._backoff = backoff
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._transcripts = Path(transcript_dir) if transcript_dir else None
        self._session = session or requests.Session()
        self._sleep = sleep

    def _transcript_path(self, req: LLMRequest) -> Path | None:
        if self._transcripts is None:
            return None
        return self._transcripts / f"{req.request_hash()}.json"

    def complete(self, req: LLMRequest) -> str:
        path = self._transcript_path(req)
        if path is not None and path.is_file():
            try:
                return json.loads(path.read_text(encoding="utf-8"))["reply"]
            except (json.JSONDecodeError, KeyError, OSError):
                pass  # corrupt transcript: fall through and re-query
        reply = self._post(req)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(
                json.dumps(
                    {
                        "model": req.model_id,
                        "temperature": req.temperature,
                        "max_output_tokens": req.max_output_tokens,
                        "prompt": req.prompt,
                        "reply": reply,
                    },
                    ensure_ascii=False,
                ),
                encoding="utf-8",
            )
            tmp.replace(path)
        return reply

    def _post(self, req: LLMRequest) -> str:
        payload = {
            "model": req.model_id,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(self._retries + 1):
            try:
                with self._gate:
                    resp = self._session.post(
                        url, json=payload, headers=self._headers, timeout=self._timeout
                    )
                if resp.status_code == 429:
                    rate_limited = True
                    raise requests.HTTPError("HTTP 429", response=resp)
                if 400 <= resp.status_code < 500:
                    body = resp.text.lower()
                    if "context" in body and ("length" in body or "window" in body):
                        raise ContextOverflow(f"provider rejected the prompt: {resp.text[:500]}")
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:500]}")
                if resp.status_code >= 500:
                    raise requests.HTTPError(f"HTTP {resp.status_code}", response=resp)
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (ContextOverflow, TransportError):
                raise
            except (requests.RequestException, ValueError, KeyError, IndexError) as exc:
                last_error = exc
                if attempt < self._retries:
                    self._sleep(self._backoff * (2**attempt))
        if rate_limited:
            raise RateLimited(
                f"rate limited by {url} after {self._retries} retries"
            ) from last_error
        raise TransportError(
            f"{url} failed after {self._retries} retries: {last_error}"
        ) from last_error


# --- output validation -------------------------------------------------------------


def brace_validator(text: str) -> bool:
    """The minimal check: the completion contains at least one '{'."""
    return "{" in text


def strict_validator(text: str) -> bool:
    """Balanced braces and at least one labeled entity line."""
    if text.count("{") == 0 or text.count("{") != text.count("}"):
        return False
    return any(m.group(6) is not None for m in ENTITY_LINE_RE.finditer(text))


VALIDATORS = {"brace": brace_validator, "strict": strict_validator}


def generate_validated(
    client: LLMClient,
    req: LLMRequest,
    validator: Callable[[str], bool] | None = None,
    max_attempts: int = 3,
) -> str:
    """Regenerate until the validator accepts, up to max_attempts completions."""
    if max_attempts < 1:
        raise ValueError(f"max_attempts must be >= 1, got {max_attempts}")
    validator = validator or brace_validator
    attempts: list[str] = []
    for _ in range(max_attempts):
        text = client.complete(req)
        if validator(text):
            return text
        attempts.append(text)
    raise MalformedOutput(
        f"all {max_attempts} completions failed validation", attempts
    )


# --- token-budget fallback ------------------------------------------------------------


def enforce_budget(
    bundle: PromptBundle,
    policy: BudgetPolicy,
    rebuild: Callable[[int], PromptBundle],
) -> PromptBundle:
    """Walk the fallback counts largest-first; return the first bundle that fits.

    The given bundle stands in for the first count when it was built at that
    count; smaller counts are rebuilt on demand. The entity-example count is
    not part of the fallback.
    """
    for i, count in enumerate(policy.doc_example_fallback):
        if i == 0 and bundle.example_counts[0] == count:
            candidate = bundle
        else:
            candidate = rebuild(count)
        if candidate.token_estimate <= policy.max_prompt_tokens:
            return candidate
    raise BudgetUnsatisfiable(
        f"even {policy.doc_example_fallback[-1]} document examples exceed "
        f"{policy.max_prompt_tokens} prompt tokens"
    )
