"""JSON-over-HTTP clients for the generator, NLI, and task-model backends.

Requests carry a protocol version and a unique id; responses must echo the
id. Transport failures are retried with exponential backoff up to
max_retries, retries are idempotent by request id, and duplicated responses
collapse to the first one seen. A pluggable transport keeps the whole client
stack replayable from recorded fixtures with no live server.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Any, Callable, Sequence

import jsonschema
import requests

from .errors import InputError, ProtocolError, TransportError
from .lmcore import TokenDistribution

PROTOCOL_VERSION = "v1"
# remote distribution mode truncates to the K most probable tokens
DEFAULT_TOP_K = 200
_BACKOFF_BASE_S = 0.2


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    timeout_ms: int = 30000
    max_retries: int = 3
    max_inflight: int = 8
    auth_token: str | None = None

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise InputError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise InputError("max_retries must be >= 0")
        if self.max_inflight < 1:
            raise InputError("max_inflight must be >= 1")


_SCHEMA_CACHE: dict[str, dict] = {}


def load_schema(name: str) -> dict:
    """Load a wire schema shipped with the package (e.g. 'nli_response')."""
    if name not in _SCHEMA_CACHE:
        payload = resources.files("pairdistill.schemas").joinpath(f"{name}.json").read_text()
        _SCHEMA_CACHE[name] = json.loads(payload)
    return _SCHEMA_CACHE[name]


def validate_message(name: str, message: dict) -> None:
    """Check a wire message against its golden schema; ProtocolError on miss."""
    try:
        jsonschema.validate(message, load_schema(name))
    except jsonschema.ValidationError as exc:
        raise ProtocolError(f"message failed {name} schema: {exc.message}") from exc


class HttpTransport:
    """requests-backed POST transport; raises TransportError on I/O trouble."""

    def __init__(self) -> None:
        self._session = requests.Session()

    def post(self, url: str, payload: dict, timeout_s: float, headers: dict) -> dict:
        try:
            response = self._session.post(url, json=payload, timeout=timeout_s, headers=headers)
        except requests.RequestException as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        if response.status_code >= 500:
            raise TransportError(f"POST {url} returned {response.status_code}")
        if response.status_code >= 400:
            raise ProtocolError(
                f"POST {url} rejected with {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()
        except ValueError as exc:
            raise ProtocolError(f"POST {url} returned non-JSON body") from exc


class WireClient:
    """Shared request/retry/dedup machinery for all three endpoints."""

    def __init__(
        self,
        endpoint: EndpointConfig,
        transport: Any | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self._transport = transport if transport is not None else HttpTransport()
        self._sleep = sleep
        self._inflight = threading.BoundedSemaphore(endpoint.max_inflight)
        self._counter = itertools.count()
        self._seen: dict[str, dict] = {}
        self._lock = threading.Lock()

    def _next_id(self, tag: str) -> str:
        return f"{tag}-{next(self._counter):08d}"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.auth_token:
            headers["Authorization"] = f"Bearer {self.endpoint.auth_token}"
        return headers

    def _post(self, path: str, payload: dict, response_schema: str) -> dict:
        url = self.endpoint.base_url.rstrip("/") + path
        request_id = payload["id"]
        attempts = self.endpoint.max_retries + 1
        last_error: Exception | None = None
        with self._inflight:
            for attempt in range(attempts):
                if attempt:
                    self._sleep(_BACKOFF_BASE_S * (2 ** (attempt - 1)))
                try:
                    body = self._transport.post(
                        url, payload, self.endpoint.timeout_ms / 1000.0, self._headers()
                    )
                except TransportError as exc:
                    last_error = exc
                    continue
                validate_message(response_schema, body)
                if body.get("id") != request_id:
                    raise ProtocolError(
                        f"response id {body.get('id')!r} does not echo request id {request_id!r}"
                    )
                with self._lock:
                    # a duplicated delivery for an already-answered id collapses
                    # to the first response
                    if request_id in self._seen:
                        return self._seen[request_id]
                    self._seen[request_id] = body
                return body
        raise TransportError(
            f"{url}: giving up after {attempts} attempts: {last_error}"
        )


class GeneratorClient(WireClient):
    """Client for POST /v1/generate."""

    def generate(
        self,
        prefix: str,
        mode: str = "sample",
        top_p: float = 0.7,
        max_tokens: int = 30,
        count: int = 1,
        seed: int = 0,
    ) -> dict:
        if mode not in ("sample", "distribution"):
            raise InputError(f"unknown generate mode {mode!r}")
        payload = {
            "protocol_version": PROTOCOL_VERSION,
            "id": self._next_id("gen"),
            "prefix": prefix,
            "mode": mode,
            "top_p": top_p,
            "max_tokens": max_tokens,
            "count": count,
            "seed": seed,
        }
        validate_message("generate_request", payload)
        return self._post("/v1/generate", payload, "generate_response")

    def sample(self, prefix: str, count: int, top_p: float, max_tokens: int, seed: int) -> list[str]:
        body = self.generate(
            prefix, mode="sample", top_p=top_p, max_tokens=max_tokens, count=count, seed=seed
        )
        sentences = body.get("sentences")
        if sentences is None:
            raise ProtocolError("sample mode response carries no 'sentences'")
        return list(sentences)

    def distribution(self, prefix: str) -> TokenDistribution:
        body = self.generate(prefix, mode="distribution", count=1)
        topk = body.get("topk")
        if topk is None:
            raise ProtocolError("distribution mode response carries no 'topk'")
        probs: dict[str, float] = {}
        total = 0.0
        for token, prob in topk:
            if not 0.0 <= prob <= 1.0:
                raise ProtocolError(f"token probability {prob} outside [0, 1]")
            probs[token] = probs.get(token, 0.0) + prob
            total += prob
        if total > 1.0 + 1e-6:
            raise ProtocolError(f"top-K probabilities sum to {total} > 1")
        if not probs:
            raise ProtocolError("empty top-K distribution")
        return TokenDistribution.from_probs(probs)


class NliClient(WireClient):
    """Client for POST /v1/nli; satisfies the EntailmentScorer contract."""

    def score(self, premise: str, hypothesis: str) -> float:
        payload = {
            "protocol_version": PROTOCOL_VERSION,
            "id": self._next_id("nli"),
            "premise": premise,
            "hypothesis": hypothesis,
        }
        validate_message("nli_request", payload)
        body = self._post("/v1/nli", payload, "nli_response")
        if "entail_prob" not in body:
            raise ProtocolError("single-pair NLI response carries no 'entail_prob'")
        return float(body["entail_prob"])

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        payload = {
            "protocol_version": PROTOCOL_VERSION,
            "id": self._next_id("nli"),
            "pairs": [[premise, hypothesis] for premise, hypothesis in pairs],
        }
        validate_message("nli_request", payload)
        body = self._post("/v1/nli", payload, "nli_response")
        probs = body.get("entail_probs")
        if probs is None:
            raise ProtocolError("batched NLI response carries no 'entail_probs'")
        if len(probs) != len(pairs):
            raise ProtocolError(
                f"batched NLI response has {len(probs)} scores for {len(pairs)} pairs"
            )
        return [float(p) for p in probs]


class TaskClient(WireClient):
    """Client for POST /v1/infer; satisfies the task-model contract."""

    def infer(self, text: str, control_code: str) -> str:
        payload = {
            "protocol_version": PROTOCOL_VERSION,
            "id": self._next_id("inf"),
            "input": text,
            "control_code": control_code,
        }
        validate_message("infer_request", payload)
        body = self._post("/v1/infer", payload, "infer_response")
        return body["output"]


class RemoteGeneratorModel:
    """GeneratorModel contract backed by a distribution-mode endpoint."""

    def __init__(self, client: GeneratorClient, end_token: str = ".", max_context: int = 1024):
        self._client = client
        self.end_token = end_token
        self.max_context = max_context

    def next_token_distribution(self, prefix: Sequence[str]) -> TokenDistribution:
        if len(prefix) > self.max_context:
            raise InputError(
                f"prefix length {len(prefix)} exceeds context limit {self.max_context}"
            )
        return self._client.distribution(" ".join(prefix))


# convenience wrappers matching the operation-level contracts
def remote_generate(client: GeneratorClient, prefix: str, **params) -> dict:
    return client.generate(prefix, **params)


def remote_nli(client: NliClient, premise: str, hypothesis: str) -> float:
    return client.score(premise, hypothesis)


def remote_task_infer(client: TaskClient, text: str, control_code: str) -> str:
    return client.infer(text, control_code)
