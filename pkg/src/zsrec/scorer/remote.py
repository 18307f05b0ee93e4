"""Client for a remote transformer LM speaking the /v1/score and /v1/generate protocol."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import httpx

from .base import LanguageModelScorer, ScorerError, SequenceScore

log = logging.getLogger(__name__)

ENV_ENDPOINT = "ZSREC_ENDPOINT"
ENV_MODEL_ID = "ZSREC_MODEL_ID"
ENV_API_KEY = "ZSREC_API_KEY"

_RETRY_STATUS = {408, 425, 429, 500, 502, 503, 504}


class RemoteScorerError(ScorerError):
    def __init__(self, message: str, status: int | None = None, cause: str | None = None):
        super().__init__(message)
        self.status = status
        self.cause = cause


@dataclass(frozen=True)
class RemoteScorerConfig:
    endpoint: str
    model: str = "gpt2"
    timeout: float = 30.0
    max_retries: int = 3
    max_batch_size: int = 32
    max_concurrent_requests: int = 4
    backoff_base: float = 0.5
    backoff_factor: float = 2.0
    api_key: str | None = None

    def __post_init__(self):
        if not self.endpoint:
            raise ValueError("endpoint is required")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_batch_size < 1 or self.max_concurrent_requests < 1:
            raise ValueError("max_batch_size and max_concurrent_requests must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, endpoint: str | None = None, model: str | None = None, **kw) -> "RemoteScorerConfig":
        endpoint = os.environ.get(ENV_ENDPOINT) or endpoint
        model = os.environ.get(ENV_MODEL_ID) or model or "gpt2"
        return cls(endpoint=endpoint or "", model=model, api_key=os.environ.get(ENV_API_KEY), **kw)


class RemoteScorer(LanguageModelScorer):
    """Batches texts, bounds in-flight requests, retries with exponential backoff.

    Results are matched to inputs by index; a batch either returns a score
    for every text or the whole call fails.
    """

    name = "remote"

    def __init__(
        self,
        cfg: RemoteScorerConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__()
        self.cfg = cfg
        headers = {"Authorization": f"Bearer {cfg.api_key}"} if cfg.api_key else {}
        self._client = httpx.Client(
            base_url=cfg.endpoint.rstrip("/"), timeout=cfg.timeout, transport=transport, headers=headers
        )
        self._sleep = sleep

    @property
    def identifier(self) -> str:
        return f"remote({self.cfg.model}@{self.cfg.endpoint})"

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, path: str, body: dict) -> dict:
        delay = self.cfg.backoff_base
        last: RemoteScorerError | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                log.warning("retrying %s in %.2fs (%s)", path, delay, last)
                self._sleep(delay)
                delay *= self.cfg.backoff_factor
            try:
                resp = self._client.post(path, json=body)
            except httpx.TimeoutException as exc:
                last = RemoteScorerError(f"{self.cfg.endpoint}{path}: timeout", cause=f"timeout: {exc}")
                continue
            except httpx.TransportError as exc:
                last = RemoteScorerError(f"{self.cfg.endpoint}{path}: {exc}", cause=type(exc).__name__)
                continue
            if resp.is_success:
                try:
                    return resp.json()
                except ValueError:
                    raise RemoteScorerError(f"{self.cfg.endpoint}{path}: response is not JSON", status=resp.status_code)
            try:
                detail = resp.json().get("error", resp.text)
            except ValueError:
                detail = resp.text
            last = RemoteScorerError(
                f"{self.cfg.endpoint}{path}: HTTP {resp.status_code}: {detail}", status=resp.status_code
            )
            if resp.status_code not in _RETRY_STATUS:
                raise last
        assert last is not None
        raise last

    def _score_chunk(self, texts: Sequence[str]) -> list[SequenceScore]:
        data = self._post("/v1/score", {"model": self.cfg.model, "texts": list(texts)})
        results = data.get("results")
        if not isinstance(results, list) or len(results) != len(texts):
            got = len(results) if isinstance(results, list) else "no"
            raise RemoteScorerError(f"partial response: {got} results for {len(texts)} texts")
        try:
            return [SequenceScore(float(r["total_logprob"]), int(r["token_count"])) for r in results]
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteScorerError(f"malformed score result: {exc}") from None

    def _score_batch(self, texts: Sequence[str]) -> list[SequenceScore]:
        size = self.cfg.max_batch_size
        chunks = [texts[i:i + size] for i in range(0, len(texts), size)]
        if len(chunks) == 1 or self.cfg.max_concurrent_requests == 1:
            parts = [self._score_chunk(c) for c in chunks]
        else:
            with ThreadPoolExecutor(self.cfg.max_concurrent_requests) as pool:
                parts = list(pool.map(self._score_chunk, chunks))
        return [s for part in parts for s in part]

    def generate(self, prompt: str, max_tokens: int, greedy: bool = True) -> str:
        if max_tokens <= 0:
            return ""
        data = self._post(
            "/v1/generate",
            {"model": self.cfg.model, "prompt": prompt, "max_tokens": max_tokens, "greedy": greedy},
        )
        text = data.get("text")
        if not isinstance(text, str):
            raise RemoteScorerError("generate response has no text field")
        return text
