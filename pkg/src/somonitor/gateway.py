"""Uniform access to completion and embedding backends.

Backends are registered under string ids; callers never talk to a provider
directly. Offline backends are pure functions of (request, seed) so entire
pipeline runs replay byte-for-byte. Every completion is retried on transient
failures with exponential backoff and audited through the artifact store.
"""

from __future__ import annotations

import enum
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import SomonitorError
from .store import ArtifactKey, Store
from .util import digest_hex


class MissingBinding(SomonitorError):
    pass


class UnknownPlaceholder(SomonitorError):
    pass


class BackendUnavailable(SomonitorError):
    pass


class TransientBackendError(SomonitorError):
    """Raised by backends for failures worth retrying (timeouts, 5xx, 429)."""


class AuthFailure(SomonitorError):
    pass


class ResponseTooLong(SomonitorError):
    pass


class EmptyInput(SomonitorError):
    pass


_PLACEHOLDER = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str

    @property
    def required_bindings(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER.findall(self.body))


def load_template(name: str) -> PromptTemplate:
    """Load a shipped template file (e.g. "pillars.v1") from the package."""
    body = resources.files("somonitor").joinpath("templates", name).read_text(encoding="utf-8")
    return PromptTemplate(template_id=name, body=body)


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute every placeholder exactly once; strict about both sides."""
    required = template.required_bindings
    missing = required - bindings.keys()
    if missing:
        raise MissingBinding(sorted(missing)[0])
    unknown = bindings.keys() - required
    if unknown:
        raise UnknownPlaceholder(sorted(unknown)[0])
    return _PLACEHOLDER.sub(lambda m: bindings[m.group(1)], template.body)


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    user_prompt: str
    backend_id: str
    temperature: float = 0.1
    seed: Optional[int] = None
    max_output: int = 2048

    def __post_init__(self):
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")

    @property
    def digest(self) -> str:
        return digest_hex(
            {
                "system_prompt": self.system_prompt,
                "user_prompt": self.user_prompt,
                "backend_id": self.backend_id,
                "temperature": self.temperature,
                "seed": self.seed,
                "max_output": self.max_output,
            }
        )


@dataclass(frozen=True)
class CompletionResult:
    text: str
    backend_id: str
    latency: float
    attempt_count: int
    request_digest: str


class NormPolicy(enum.Enum):
    L2_NORMALIZED = "l2"
    RAW = "raw"


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Row-per-input embedding matrix; zero rows stay zero and are flagged."""

    vectors: np.ndarray
    d: int
    norm_policy: NormPolicy
    zero_rows: tuple[int, ...] = ()

    def row(self, i: int) -> np.ndarray:
        return self.vectors[i]


class CompletionBackend(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


class EmbeddingBackend(Protocol):
    d: int
    norm_policy: NormPolicy

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class Gateway:
    """Thread-safe front door for every model call in the pipeline."""

    def __init__(
        self,
        store: Optional[Store] = None,
        max_parallel: int = 4,
        retry_limit: int = 3,
        backoff_base: float = 0.2,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.store = store
        self.max_parallel = max_parallel
        self.retry_limit = retry_limit
        self.backoff_base = backoff_base
        self._sleep = sleeper
        self._completions: dict[str, CompletionBackend] = {}
        self._embeddings: dict[str, EmbeddingBackend] = {}
        self._gates: dict[str, threading.Semaphore] = {}
        self._lock = threading.Lock()

    def register_completion(self, backend_id: str, backend: CompletionBackend) -> None:
        self._completions[backend_id] = backend

    def register_embedding(self, backend_id: str, backend: EmbeddingBackend) -> None:
        self._embeddings[backend_id] = backend

    def _gate(self, backend_id: str) -> threading.Semaphore:
        with self._lock:
            if backend_id not in self._gates:
                self._gates[backend_id] = threading.Semaphore(self.max_parallel)
            return self._gates[backend_id]

    def complete(self, request: CompletionRequest) -> CompletionResult:
        backend = self._completions.get(request.backend_id)
        if backend is None:
            raise BackendUnavailable(f"no completion backend registered as {request.backend_id!r}")
        started = time.monotonic()
        attempts = 0
        gate = self._gate(request.backend_id)
        while True:
            attempts += 1
            try:
                with gate:
                    text = backend.complete(request)
                break
            except TransientBackendError as exc:
                if attempts > self.retry_limit:
                    raise BackendUnavailable(
                        f"backend {request.backend_id!r} unavailable after {attempts} attempts: {exc}"
                    ) from exc
                self._sleep(self.backoff_base * (2 ** (attempts - 1)))
        if len(text.split()) > request.max_output:
            raise ResponseTooLong(
                f"response has {len(text.split())} tokens, limit {request.max_output}"
            )
        latency = time.monotonic() - started
        digest = request.digest
        result = CompletionResult(
            text=text,
            backend_id=request.backend_id,
            latency=latency,
            attempt_count=attempts,
            request_digest=digest,
        )
        self._audit(result)
        return result

    def _audit(self, result: CompletionResult) -> None:
        # One logical audit entry per request: keyed by the request digest,
        # so retries and replays overwrite rather than multiply.
        if self.store is None:
            return
        key = ArtifactKey("llm-audit", "gateway", result.request_digest[:16])
        self.store.put_artifact(
            key,
            {
                "request_digest": result.request_digest,
                "backend_id": result.backend_id,
                "attempt_count": result.attempt_count,
                "latency_s": round(result.latency, 6),
                "response_chars": len(result.text),
            },
        )

    def embed(self, texts: Sequence[str], backend_id: str) -> EmbeddingMatrix:
        if not texts:
            raise EmptyInput("embed() requires at least one text")
        backend = self._embeddings.get(backend_id)
        if backend is None:
            raise BackendUnavailable(f"no embedding backend registered as {backend_id!r}")
        vectors = np.asarray(backend.embed(list(texts)), dtype=np.float64)
        if vectors.shape != (len(texts), backend.d):
            raise BackendUnavailable(
                f"backend {backend_id!r} returned shape {vectors.shape}, "
                f"expected {(len(texts), backend.d)}"
            )
        zero_rows = tuple(int(i) for i in np.where(~vectors.any(axis=1))[0])
        if backend.norm_policy == NormPolicy.L2_NORMALIZED:
            norms = np.linalg.norm(vectors, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            vectors = vectors / norms
        return EmbeddingMatrix(
            vectors=vectors, d=backend.d, norm_policy=backend.norm_policy, zero_rows=zero_rows
        )
