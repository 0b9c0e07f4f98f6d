"""Model gateway: one capability contract, two interchangeable backends.

Capabilities: chat completion, text embedding, binary yes/no logits, and
per-token log-probabilities. The remote backend speaks an OpenAI-compatible
JSON HTTP API; the mock backend is a pure function of its inputs plus an
optional scenario table, so the whole test suite runs offline.

Mock determinism is anchored on SHA-256 (Python's builtin hash is salted per
process). The published rules, which tests may re-evaluate independently:
  - chat: scenario table first (substring match, first record wins), else
    the response is "mock:" + first 12 hex digits of the request hash
  - embed_texts: feature hashing; token t increments bucket
    sha256(utf8(t)) mod dim, then the vector is L2-normalized
  - yes_no_logits: scenario table first, else each logit is
    -4 + 8 * (first-8-bytes of sha256(utf8(tag + "\\x1f" + prompt)) / 2^64)
    with tag "yes" or "no"
  - token_logprobs: each token scores -(sha256-int(utf8(token)) mod 100)/100
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import requests

from .errors import (
    CapabilityUnsupportedError,
    DimensionMismatchError,
    EmptyTextError,
    ModelTimeoutError,
    ParseError,
    RateLimitedError,
    RefusalError,
    TransportError,
)
from .jsonl import read_records
from .tokens import surfaces

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    image: str | None = None
    temperature: float = 0.0
    max_tokens: int = 1024


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"


@dataclass(frozen=True)
class BinaryLogits:
    l_yes: float
    l_no: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.l_yes) and math.isfinite(self.l_no)):
            raise ValueError(f"logits must be finite: {self.l_yes}, {self.l_no}")


@dataclass(frozen=True)
class TokenLogProbs:
    tokens: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        # Provider float noise can push a certainty slightly above 0; clamp.
        object.__setattr__(
            self,
            "tokens",
            tuple((tok, min(lp, 0.0)) for tok, lp in self.tokens),
        )


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    credential_env: str = ""
    timeout: float = 30.0
    retries: int = 2
    supports_vision: bool = False

    def credential(self) -> str:
        """The API key, read from the environment only; empty when unset."""
        if not self.credential_env:
            return ""
        return os.environ.get(self.credential_env, "")


class ModelBackend:
    """Capability contract; backends override what they support."""

    name = "base"

    def chat(self, req: ChatRequest) -> ChatResponse:
        raise CapabilityUnsupportedError("chat")

    def embed_texts(self, texts: Sequence[str], dim: int) -> list[list[float]]:
        raise CapabilityUnsupportedError("embed_texts")

    def yes_no_logits(self, prompt: str) -> BinaryLogits:
        raise CapabilityUnsupportedError("yes_no_logits")

    def token_logprobs(self, prompt: str, completion: str) -> TokenLogProbs:
        raise CapabilityUnsupportedError("token_logprobs")


def stable_digest(*parts: str) -> bytes:
    joined = "\x1f".join(parts)
    return hashlib.sha256(joined.encode("utf-8")).digest()


def stable_unit(*parts: str) -> float:
    """Deterministic value in [0, 1) from the first 8 digest bytes."""
    return int.from_bytes(stable_digest(*parts)[:8], "big") / 2**64


def token_bucket(token: str, dim: int) -> int:
    return int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest(), "big") % dim


def token_logprob_value(token: str) -> float:
    h = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest(), "big")
    return -(h % 100) / 100


@dataclass(frozen=True)
class Scenario:
    """One mock fixture rule: substring match plus a canned result."""

    match: str
    response: str | None = None
    l_yes: float | None = None
    l_no: float | None = None


def load_scenarios(path: str | Path) -> list[Scenario]:
    scenarios: list[Scenario] = []
    for lineno, record in read_records(path):
        if "match" not in record or not isinstance(record["match"], str):
            raise ParseError("scenario needs a string 'match' field", line=lineno)
        has_response = isinstance(record.get("response"), str)
        has_logits = isinstance(record.get("l_yes"), (int, float)) and isinstance(
            record.get("l_no"), (int, float)
        )
        if has_response == has_logits:
            raise ParseError(
                "scenario needs either 'response' or both 'l_yes' and 'l_no'",
                line=lineno,
            )
        if has_response:
            scenarios.append(Scenario(match=record["match"], response=record["response"]))
        else:
            scenarios.append(
                Scenario(
                    match=record["match"],
                    l_yes=float(record["l_yes"]),
                    l_no=float(record["l_no"]),
                )
            )
    return scenarios


class MockBackend(ModelBackend):
    """Fully deterministic offline backend; see the module docstring rules."""

    name = "mock"

    def __init__(self, scenarios: Sequence[Scenario] = ()) -> None:
        self.scenarios = list(scenarios)

    def chat(self, req: ChatRequest) -> ChatResponse:
        haystack = req.system + "\n" + req.user
        for scenario in self.scenarios:
            if scenario.response is not None and scenario.match in haystack:
                return ChatResponse(text=scenario.response)
        digest = stable_digest(
            "chat",
            req.system,
            req.user,
            req.image or "",
            repr(req.temperature),
            str(req.max_tokens),
        )
        return ChatResponse(text="mock:" + digest.hex()[:12])

    def embed_texts(self, texts: Sequence[str], dim: int) -> list[list[float]]:
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        out: list[list[float]] = []
        for text in texts:
            if text == "":
                raise EmptyTextError()
            vec = [0.0] * dim
            for tok in surfaces(text):
                vec[token_bucket(tok, dim)] += 1.0
            norm = sum(x * x for x in vec) ** 0.5
            if norm > 0.0:
                vec = [x / norm for x in vec]
            out.append(vec)
        return out

    def yes_no_logits(self, prompt: str) -> BinaryLogits:
        for scenario in self.scenarios:
            if scenario.l_yes is not None and scenario.match in prompt:
                return BinaryLogits(l_yes=scenario.l_yes, l_no=scenario.l_no)
        return BinaryLogits(
            l_yes=-4.0 + 8.0 * stable_unit("yes", prompt),
            l_no=-4.0 + 8.0 * stable_unit("no", prompt),
        )

    def token_logprobs(self, prompt: str, completion: str) -> TokenLogProbs:
        return TokenLogProbs(
            tokens=tuple(
                (tok, token_logprob_value(tok)) for tok in surfaces(completion)
            )
        )


_RETRIABLE_STATUSES = {429, 500, 502, 503, 504}


class RemoteBackend(ModelBackend):
    """OpenAI-compatible HTTP adapter.

    Credentials come only from the environment variable named in the
    EndpointConfig. Rate limits, timeouts, and 5xx responses retry up to the
    configured count; auth failures fail fast.
    """

    name = "remote"

    def __init__(
        self,
        config: EndpointConfig,
        session: requests.Session | None = None,
        sleep=time.sleep,
    ) -> None:
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        url = self.config.base_url.rstrip("/") + path
        headers = {"Content-Type": "application/json"}
        key = self.config.credential()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last_error: TransportError | None = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                log.warning("retrying %s (attempt %d): %s", url, attempt + 1, last_error)
                self._sleep(min(2.0 ** (attempt - 1), 8.0))
            try:
                response = self.session.post(
                    url, json=payload, headers=headers, timeout=self.config.timeout
                )
            except requests.Timeout as exc:
                last_error = ModelTimeoutError(f"timeout calling {url}: {exc}")
                continue
            except requests.RequestException as exc:
                raise TransportError(f"transport failure calling {url}: {exc}") from exc
            if response.status_code in (401, 403):
                raise TransportError(
                    f"authentication failed ({response.status_code}) calling {url}",
                    status=response.status_code,
                )
            if response.status_code in _RETRIABLE_STATUSES:
                last_error = (
                    RateLimitedError(f"rate limited calling {url}", status=429)
                    if response.status_code == 429
                    else TransportError(
                        f"server error {response.status_code} calling {url}",
                        status=response.status_code,
                    )
                )
                continue
            if response.status_code >= 400:
                raise TransportError(
                    f"HTTP {response.status_code} calling {url}: {response.text[:200]}",
                    status=response.status_code,
                )
            try:
                return response.json()
            except ValueError as exc:
                raise TransportError(f"non-JSON response from {url}") from exc
        assert last_error is not None
        raise last_error

    def chat(self, req: ChatRequest) -> ChatResponse:
        content: Any = req.user
        if req.image and self.config.supports_vision:
            content = [
                {"type": "text", "text": req.user},
                {"type": "image_url", "image_url": {"url": req.image}},
            ]
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": content})
        body = self._post(
            "/chat/completions",
            {
                "model": self.config.model,
                "messages": messages,
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
            },
        )
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason", "stop")
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc
        if finish == "content_filter" or text is None:
            raise RefusalError("endpoint declined to produce content")
        return ChatResponse(text=text, finish_reason=finish)

    def embed_texts(self, texts: Sequence[str], dim: int) -> list[list[float]]:
        for text in texts:
            if text == "":
                raise EmptyTextError()
        body = self._post(
            "/embeddings", {"model": self.config.model, "input": list(texts)}
        )
        try:
            rows = sorted(body["data"], key=lambda r: r["index"])
            vectors = [[float(x) for x in row["embedding"]] for row in rows]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed embeddings response: {exc}") from exc
        for vec in vectors:
            if len(vec) != dim:
                raise DimensionMismatchError(dim, len(vec))
        return vectors

    def yes_no_logits(self, prompt: str) -> BinaryLogits:
        """Read yes/no log-probs from top_logprobs of the first sampled token.

        Log-probs stand in for logits: the downstream posterior depends only
        on the difference, which a shared normalization constant cancels.
        """
        body = self._post(
            "/chat/completions",
            {
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
                "max_tokens": 1,
                "logprobs": True,
                "top_logprobs": 20,
            },
        )
        try:
            top = body["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
            candidates = {
                str(item["token"]).strip().casefold(): float(item["logprob"])
                for item in top
            }
        except (KeyError, IndexError, TypeError) as exc:
            raise CapabilityUnsupportedError("yes_no_logits") from exc
        l_yes = candidates.get("yes", candidates.get("是"))
        l_no = candidates.get("no", candidates.get("否"))
        if l_yes is None or l_no is None:
            raise CapabilityUnsupportedError("yes_no_logits")
        return BinaryLogits(l_yes=l_yes, l_no=l_no)

    def token_logprobs(self, prompt: str, completion: str) -> TokenLogProbs:
        """Score a fixed completion via the legacy echo+logprobs endpoint."""
        body = self._post(
            "/completions",
            {
                "model": self.config.model,
                "prompt": prompt + completion,
                "max_tokens": 0,
                "echo": True,
                "logprobs": 0,
            },
        )
        try:
            lp = body["choices"][0]["logprobs"]
            tokens = lp["tokens"]
            values = lp["token_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise CapabilityUnsupportedError("token_logprobs") from exc
        pairs = [
            (str(tok), float(val))
            for tok, val in zip(tokens, values)
            if val is not None
        ]
        return TokenLogProbs(tokens=tuple(pairs))
