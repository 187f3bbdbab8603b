"""Item- and sequence-level embedding services.

Three providers share one small interface (``dim`` and ``embed_texts``):

* :class:`StubProvider` - deterministic bag-of-token hash vectors, no network.
* :class:`HttpProvider` - ``POST {endpoint}/v1/embed`` with batching and retry.
* :class:`FileProvider` - serves a previously cached item matrix.
"""

from __future__ import annotations

import functools
import logging
import os
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from .domain import Catalog

log = logging.getLogger(__name__)

SEQUENCE_PREFIX = "The user's purchase history list is as follows:"
SEQUENCE_SEPARATOR = "; "
HTTP_BATCH_SIZE = 64
ENDPOINT_ENV = "FEDSEQREC_EMBED_ENDPOINT"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class ProviderError(RuntimeError):
    """The embedding provider failed or returned something unusable."""


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding punctuation."""
    out = []
    for tok in text.lower().split():
        tok = tok.strip(string.punctuation)
        if tok:
            out.append(tok)
    return out


@functools.lru_cache(maxsize=65536)
def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    key = np.array([fnv1a_64(token.encode("utf-8")), seed & _MASK64], dtype=np.uint64)
    vec = np.random.Generator(np.random.Philox(key=key)).standard_normal(dim)
    vec.setflags(write=False)
    return vec


def stub_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """L2-normalised sum of per-token Gaussian vectors keyed by FNV-1a hashes."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    tokens = tokenize(text)
    if not tokens:
        raise ValueError(f"text has no tokens: {text!r}")
    total = np.zeros(dim)
    for tok in tokens:
        total += _token_vector(tok, dim, seed)
    norm = np.linalg.norm(total)
    if norm == 0.0:
        raise ValueError("token vectors cancel to zero")
    return total / norm


class StubProvider:
    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed
        self.calls = 0
        self.texts_seen = 0

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        self.texts_seen += len(texts)
        return np.stack([stub_embed(t, self.dim, self.seed) for t in texts])


class _Retryable(Exception):
    pass


class HttpProvider:
    """Client for a remote embedding server speaking the ``/v1/embed`` protocol."""

    def __init__(self, endpoint: str, batch_size: int = HTTP_BATCH_SIZE, timeout: float = 30.0,
                 attempts: int = 3, backoff: float = 0.5, session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.batch_size = batch_size
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self.session = session or requests.Session()
        self.dim: int | None = None
        self.calls = 0
        self.texts_seen = 0

    def _post(self, texts: list[str]) -> np.ndarray:
        @retry(stop=stop_after_attempt(self.attempts),
               wait=wait_exponential(multiplier=self.backoff, max=8.0),
               retry=retry_if_exception_type(_Retryable), reraise=True)
        def attempt():
            self.calls += 1
            try:
                resp = self.session.post(f"{self.endpoint}/v1/embed", json={"texts": texts},
                                         timeout=self.timeout)
            except requests.RequestException as exc:
                raise _Retryable(f"transport error: {exc}") from exc
            if resp.status_code != 200:
                raise _Retryable(f"HTTP {resp.status_code}")
            return resp.json()

        try:
            body = attempt()
        except _Retryable as exc:
            raise ProviderError(f"embedding request failed after {self.attempts} attempts: {exc}") from exc
        try:
            vecs = np.asarray(body["embeddings"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError("malformed embedding response") from exc
        if vecs.ndim != 2 or vecs.shape[0] != len(texts):
            raise ProviderError(f"expected {len(texts)} embeddings, got shape {vecs.shape}")
        if not np.all(np.isfinite(vecs)):
            raise ProviderError("non-finite values in embedding response")
        return vecs

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        out = []
        for i in range(0, len(texts), self.batch_size):
            vecs = self._post(texts[i:i + self.batch_size])
            if self.dim is None:
                self.dim = vecs.shape[1]
            elif vecs.shape[1] != self.dim:
                raise ProviderError(f"dimension changed from {self.dim} to {vecs.shape[1]}")
            out.append(vecs)
        self.texts_seen += len(texts)
        if not out:
            return np.zeros((0, self.dim or 0))
        return np.concatenate(out)


class FileProvider:
    """Serves an item matrix from a cache file; cannot embed new text."""

    def __init__(self, path):
        self.path = Path(path)
        self.matrix = load_cache(self.path)
        self.dim = self.matrix.shape[1]
        self.calls = 0
        self.texts_seen = 0

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        raise ProviderError("file provider only serves cached item embeddings")


@dataclass
class ProviderConfig:
    mode: str = "stub"
    dim: int = 64
    seed: int = 0
    endpoint: str | None = None
    cache: str | None = None

    def __post_init__(self):
        if self.mode not in ("stub", "http", "file"):
            raise ValueError(f"unknown provider mode {self.mode!r}")
        if self.mode == "http" and not (self.endpoint or os.environ.get(ENDPOINT_ENV)):
            raise ValueError(f"http provider needs an endpoint (or ${ENDPOINT_ENV})")
        if self.mode == "file" and not self.cache:
            raise ValueError("file provider needs a cache path")
        if self.mode == "stub" and self.dim < 2:
            raise ValueError("stub dim must be >= 2")


def make_provider(cfg: ProviderConfig):
    if cfg.mode == "stub":
        return StubProvider(cfg.dim, cfg.seed)
    if cfg.mode == "http":
        return HttpProvider(os.environ.get(ENDPOINT_ENV) or cfg.endpoint)
    return FileProvider(cfg.cache)


def save_cache(matrix: np.ndarray, path) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"dim={matrix.shape[1]} count={matrix.shape[0]}\n")
        for row in matrix:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    os.replace(tmp, path)


def load_cache(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            fields = dict(h.split("=", 1) for h in header)
            dim, count = int(fields["dim"]), int(fields["count"])
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}: bad cache header") from exc
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != count or any(len(r) != dim for r in rows):
        raise ValueError(f"{path}: expected {count} rows of {dim} values")
    return np.array([[float(x) for x in r] for r in rows], dtype=np.float64).reshape(count, dim)


def embed_items(catalog: Catalog, provider, cache_path=None) -> np.ndarray:
    """Item embedding matrix in ItemId order, read from / written to ``cache_path``."""
    if catalog.size < 1:
        raise ValueError("empty catalog")
    if cache_path is not None and Path(cache_path).exists():
        matrix = load_cache(cache_path)
        if matrix.shape[0] != catalog.size:
            raise ValueError(f"cache has {matrix.shape[0]} rows, catalog has {catalog.size}")
        return matrix
    if isinstance(provider, FileProvider):
        matrix = provider.matrix
        if matrix.shape[0] != catalog.size:
            raise ValueError(f"cache has {matrix.shape[0]} rows, catalog has {catalog.size}")
        return matrix
    matrix = provider.embed_texts(list(catalog.titles))
    if matrix.shape[0] != catalog.size:
        raise ProviderError("provider returned the wrong number of rows")
    if not np.all(np.isfinite(matrix)):
        raise ProviderError("non-finite item embeddings")
    if cache_path is not None:
        save_cache(matrix, cache_path)
    return matrix


def serialize_sequence(titles: Sequence[str]) -> str:
    return SEQUENCE_PREFIX + " " + SEQUENCE_SEPARATOR.join(titles)


@dataclass(frozen=True)
class SequenceEmbedding:
    vector: np.ndarray
    source: str

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


def embed_sequence(titles: Sequence[str], provider) -> SequenceEmbedding:
    return embed_sequences([titles], provider)[0]


def embed_sequences(title_lists: Sequence[Sequence[str]], provider) -> list[SequenceEmbedding]:
    """Embed several sequences in a single provider call."""
    if any(len(t) == 0 for t in title_lists):
        raise ValueError("cannot embed an empty sequence")
    texts = [serialize_sequence(t) for t in title_lists]
    vecs = provider.embed_texts(texts)
    if vecs.shape[0] != len(texts) or not np.all(np.isfinite(vecs)):
        raise ProviderError("bad sequence embedding response")
    return [SequenceEmbedding(v, t) for v, t in zip(vecs, texts)]
