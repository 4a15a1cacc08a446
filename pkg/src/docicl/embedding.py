"""Text embeddings behind a pluggable provider, plus cosine similarity.

Two providers ship with the package: an HTTP provider that posts text batches
to a configurable endpoint (the deployment path, where a sentence-embedding
service lives) and a deterministic character-trigram hash embedder for
offline runs and tests. Vectors carry their provider identity; vectors from
different providers never compare.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import requests

from .dataset import Document, Entity
from .errors import DimMismatch, ProviderError, ProviderMismatch, ZeroVector


@dataclass(frozen=True)
class EmbeddingVector:
    provider_id: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("embedding contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.size)


class EmbeddingProvider:
    """Interface: a provider id plus batch embedding of texts."""

    provider_id: str

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        raise NotImplementedError


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.provider_id != b.provider_id:
        raise ProviderMismatch(f"{a.provider_id!r} vs {b.provider_id!r}")
    if a.dim != b.dim:
        raise DimMismatch(f"dim {a.dim} vs {b.dim}")
    na, nb = float(np.linalg.norm(a.values)), float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for an all-zero vector")
    return float(np.dot(a.values, b.values) / (na * nb))


def document_text(doc: Document) -> str:
    """Entity texts joined by single spaces, in entity order."""
    return " ".join(e.text for e in doc.entities)


# --- deterministic offline provider -------------------------------------------


class HashEmbedder(EmbeddingProvider):
    """Character-trigram feature hashing into ``dim`` buckets, L2-normalized.

    Text is wrapped in sentinel characters so every non-empty text yields at
    least one trigram. Bucket and sign come from a keyed blake2b digest, so
    identical (dim, seed) instances embed identically across processes, and a
    text embeds the same alone or in any batch.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 8:
            raise ValueError(f"hash embedder dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self.provider_id = f"hash:d{dim}:s{seed}"
        self._key = seed.to_bytes(8, "little", signed=True)

    def _embed_one(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed an empty text")
        wrapped = f"\x02{text}\x03"
        acc = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(wrapped) - 2):
            digest = hashlib.blake2b(
                wrapped[i : i + 3].encode("utf-8"), key=self._key, digest_size=8
            ).digest()
            h = int.from_bytes(digest, "little")
            sign = 1.0 if h & 1 else -1.0
            acc[(h >> 1) % self.dim] += sign
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            # Signed collisions cancelled out; fall back to unsigned counts.
            for i in range(len(wrapped) - 2):
                digest = hashlib.blake2b(
                    wrapped[i : i + 3].encode("utf-8"), key=self._key, digest_size=8
                ).digest()
                h = int.from_bytes(digest, "little")
                acc[(h >> 1) % self.dim] += 1.0
            norm = float(np.linalg.norm(acc))
        return EmbeddingVector(self.provider_id, acc / norm)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self._embed_one(t) for t in texts]


def hash_embedder(dim: int = 256, seed: int = 0) -> HashEmbedder:
    return HashEmbedder(dim=dim, seed=seed)


# --- HTTP provider --------------------------------------------------------------


class HttpEmbeddingProvider(EmbeddingProvider):
    """POSTs ``{"texts": [...]}`` and expects ``{"dim": d, "vectors": [[...]]}``."""

    def __init__(
        self,
        endpoint: str,
        token: str | None = None,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
        session: requests.Session | None = None,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint
        self.provider_id = f"http:{endpoint}"
        self._headers = {"Content-Type": "application/json"}
        if token:
            self._headers["Authorization"] = f"Bearer {token}"
        self._timeout = timeout
        self._retries = retries
        self._backoff = backoff
        self._session = session or requests.Session()
        self._sleep = sleep

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        payload = {"texts": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self._retries + 1):
            try:
                resp = self._session.post(
                    self.endpoint, json=payload, headers=self._headers, timeout=self._timeout
                )
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise requests.HTTPError(f"HTTP {resp.status_code}", response=resp)
                resp.raise_for_status()
                body = resp.json()
                return self._parse(body, len(texts))
            except (requests.RequestException, ValueError, KeyError) as exc:
                last_error = exc
                if attempt < self._retries:
                    self._sleep(self._backoff * (2**attempt))
        raise ProviderError(
            f"embedding endpoint {self.endpoint} failed after {self._retries} retries: {last_error}"
        ) from last_error

    def _parse(self, body: dict, expected: int) -> list[EmbeddingVector]:
        dim = int(body["dim"])
        vectors = body["vectors"]
        if len(vectors) != expected:
            raise ProviderError(f"provider returned {len(vectors)} vectors for {expected} texts")
        out = []
        for vec in vectors:
            if len(vec) != dim:
                raise DimMismatch(f"provider declared dim {dim} but sent a {len(vec)}-vector")
            out.append(EmbeddingVector(self.provider_id, np.asarray(vec, dtype=np.float64)))
        return out


# --- caching embed calls ----------------------------------------------------------


def _text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Memoizes vectors by (provider_id, text hash); optionally spills to disk.

    Concurrent readers are safe; writes are serialized by a lock.
    """

    def __init__(self, directory: str | Path | None = None):
        self._mem: dict[tuple[str, str], EmbeddingVector] = {}
        self._lock = threading.Lock()
        self._dir = Path(directory) if directory is not None else None

    def _path(self, provider_id: str, key: str) -> Path:
        safe = hashlib.sha256(provider_id.encode("utf-8")).hexdigest()[:16]
        return self._dir / safe / f"{key}.json"

    def get(self, provider_id: str, text: str) -> EmbeddingVector | None:
        key = (provider_id, _text_key(text))
        hit = self._mem.get(key)
        if hit is not None:
            return hit
        if self._dir is not None:
            path = self._path(provider_id, key[1])
            if path.is_file():
                try:
                    values = json.loads(path.read_text(encoding="utf-8"))["values"]
                    vec = EmbeddingVector(provider_id, np.asarray(values, dtype=np.float64))
                except (json.JSONDecodeError, KeyError, ValueError, OSError):
                    return None  # corrupt entry: treat as a miss, caller recomputes
                with self._lock:
                    self._mem[key] = vec
                return vec
        return None

    def put(self, provider_id: str, text: str, vector: EmbeddingVector) -> None:
        key = (provider_id, _text_key(text))
        with self._lock:
            self._mem[key] = vector
            if self._dir is not None:
                path = self._path(provider_id, key[1])
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_text(
                    json.dumps({"values": vector.values.tolist()}), encoding="utf-8"
                )
                tmp.replace(path)


def embed_texts(
    texts: Sequence[str],
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
) -> list[EmbeddingVector]:
    """Embed texts through the cache; the provider sees each distinct text at most once."""
    if cache is None:
        cache = EmbeddingCache()
    missing: list[str] = []
    seen: set[str] = set()
    for t in texts:
        if t not in seen and cache.get(provider.provider_id, t) is None:
            missing.append(t)
            seen.add(t)
    if missing:
        for text, vec in zip(missing, provider.embed(missing)):
            cache.put(provider.provider_id, text, vec)
    out = []
    for t in texts:
        vec = cache.get(provider.provider_id, t)
        assert vec is not None
        out.append(vec)
    return out


def embed_documents(
    docs: Iterable[Document],
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
) -> dict[str, EmbeddingVector]:
    """One vector per document, keyed by doc_id, from the concatenated entity texts."""
    docs = list(docs)
    vectors = embed_texts([document_text(d) for d in docs], provider, cache)
    return {d.doc_id: v for d, v in zip(docs, vectors)}


def embed_entities(
    entities: Iterable[Entity],
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
) -> dict[str, EmbeddingVector]:
    """One vector per entity, keyed by entity_id. Callers pass filtered entities."""
    entities = list(entities)
    vectors = embed_texts([e.text for e in entities], provider, cache)
    return {e.entity_id: v for e, v in zip(entities, vectors)}
