# Copyright 2025 The zoomground authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Vision-language model backends

Transport only: a backend turns a PromptBundle into the first assistant
message's text. Parsing that text is the grammar module's job.

Two implementations share one contract:

* ``HTTPChatBackend`` posts chat-completion requests (system message, user
  message with an inline base64 PNG and the prompt text) over ``requests``.
* ``MockBackend`` replays a script deterministically and records every
  request, for tests.

Both bound in-flight requests with a semaphore sized by ``max_parallel``.
"""

import base64
import hashlib
import io
import logging
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import requests
from PIL import Image

from .prompts import PromptBundle

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class BackendError(Exception):
    """Base class for backend failures, tagged with the request id."""

    def __init__(self, message: str, request_id: Optional[str] = None):
        super().__init__(f"{message} (request {request_id})" if request_id else message)
        self.request_id = request_id


class BackendTransportError(BackendError):
    """The request never produced an HTTP response."""


class BackendTimeoutError(BackendTransportError):
    """Every attempt timed out."""


class BackendProtocolError(BackendError):
    """The endpoint answered with a non-success status."""

    def __init__(self, message: str, status_code: int, request_id: Optional[str] = None):
        super().__init__(message, request_id)
        self.status_code = status_code


class MalformedResponseError(BackendError):
    """The response carried no assistant text."""


class ScriptExhaustedError(AssertionError):
    """A mock backend was asked for more responses than its script holds."""


@dataclass(frozen=True)
class BackendConfig:
    """
    Connection settings for one chat-completion endpoint.

    Attributes:
        endpoint: Full URL of the chat-completions route
        model_name: Model identifier sent with each request
        timeout: Per-attempt timeout in seconds
        max_retries: Retries after the first attempt
        max_parallel: Upper bound on in-flight requests
        api_key: Bearer token, normally resolved from ``api_key_env``
        api_key_env: Environment variable holding the API key
        max_tokens: Completion length limit
        temperature: Sampling temperature (0 keeps runs reproducible)
        backoff: Base delay in seconds; retry ``n`` waits ``backoff * 2**(n - 1)``
    """

    endpoint: str
    model_name: str
    timeout: float = 60.0
    max_retries: int = 2
    max_parallel: int = 4
    api_key: Optional[str] = field(default=None, repr=False)
    api_key_env: str = "ZOOMGROUND_API_KEY"
    max_tokens: int = 256
    temperature: float = 0.0
    backoff: float = 1.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError(f"Backend timeout must be positive, got {self.timeout}")
        if self.max_parallel < 1:
            raise ValueError(f"max_parallel must be at least 1, got {self.max_parallel}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be non-negative, got {self.max_retries}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BackendConfig":
        """Build a config from a YAML section, resolving the API key from the environment."""
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        if not known.get("endpoint") or not known.get("model_name"):
            raise ValueError("Backend config needs 'endpoint' and 'model_name'")
        if known.get("api_key") is None:
            known["api_key"] = os.environ.get(known.get("api_key_env", "ZOOMGROUND_API_KEY"))
        return cls(**known)


@dataclass(frozen=True)
class CompletionOutcome:
    text: str
    latency_ms: float
    attempt_count: int
    request_id: str = ""


def encode_image(image: Image.Image) -> str:
    """Encode a screenshot as a PNG data URI."""
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buffer.getvalue()).decode("utf-8")


def prompt_key(bundle: PromptBundle) -> str:
    """Stable SHA-256 over the prompt texts and the image pixels."""
    digest = hashlib.sha256()
    digest.update(bundle.system_text.encode("utf-8"))
    digest.update(b"\0")
    digest.update(bundle.user_text.encode("utf-8"))
    digest.update(b"\0")
    digest.update(f"{bundle.image.mode}:{bundle.image.size}".encode("utf-8"))
    digest.update(bundle.image.tobytes())
    return digest.hexdigest()


class ChatBackend:
    """Common limiter for every backend; subclasses implement ``_complete``."""

    def __init__(self, max_parallel: int = 1, model_name: str = ""):
        if max_parallel < 1:
            raise ValueError(f"max_parallel must be at least 1, got {max_parallel}")
        self.max_parallel = max_parallel
        self.model_name = model_name
        self._limiter = threading.BoundedSemaphore(max_parallel)

    def complete(self, bundle: PromptBundle) -> CompletionOutcome:
        """Send one prompt and return the assistant text."""
        with self._limiter:
            return self._complete(bundle)

    def _complete(self, bundle: PromptBundle) -> CompletionOutcome:
        raise NotImplementedError


class HTTPChatBackend(ChatBackend):
    """Chat-completion client for OpenAI-compatible endpoints."""

    def __init__(self, config: BackendConfig, session: Optional[requests.Session] = None):
        super().__init__(max_parallel=config.max_parallel, model_name=config.model_name)
        self.config = config
        self.session = session or requests.Session()

    def build_payload(self, bundle: PromptBundle) -> Dict[str, Any]:
        return {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {
                    "role": "user",
                    "content": [
                        {"type": "image_url", "image_url": {"url": encode_image(bundle.image)}},
                        {"type": "text", "text": bundle.user_text},
                    ],
                },
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }

    def _headers(self, request_id: str) -> Dict[str, str]:
        headers = {"Content-Type": "application/json", "X-Request-ID": request_id}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        return headers

    def _complete(self, bundle: PromptBundle) -> CompletionOutcome:
        request_id = uuid.uuid4().hex
        payload = self.build_payload(bundle)
        started = time.perf_counter()
        attempts = self.config.max_retries + 1
        last_error: Optional[BackendError] = None

        for attempt in range(attempts):
            if attempt:
                delay = self.config.backoff * 2 ** (attempt - 1)
                logger.debug(f"Request {request_id}: retry {attempt} after {delay:.2f}s")
                time.sleep(delay)
            try:
                response = self.session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=self._headers(request_id),
                    timeout=self.config.timeout,
                )
            except requests.Timeout as e:
                last_error = BackendTimeoutError(f"Timed out after {self.config.timeout}s: {e}", request_id)
                continue
            except requests.RequestException as e:
                last_error = BackendTransportError(f"Transport failure: {e}", request_id)
                continue

            if response.status_code in RETRYABLE_STATUS:
                last_error = BackendProtocolError(
                    f"HTTP {response.status_code} from {self.config.endpoint}",
                    response.status_code,
                    request_id,
                )
                continue
            if not 200 <= response.status_code < 300:
                raise BackendProtocolError(
                    f"HTTP {response.status_code} from {self.config.endpoint}: {response.text[:200]}",
                    response.status_code,
                    request_id,
                )

            text = self._extract_text(response, request_id)
            latency = (time.perf_counter() - started) * 1000.0
            logger.debug(f"Request {request_id}: {latency:.0f} ms, {attempt + 1} attempt(s)")
            return CompletionOutcome(text, latency, attempt + 1, request_id)

        logger.error(f"Request {request_id} failed after {attempts} attempt(s): {last_error}")
        raise last_error

    @staticmethod
    def _extract_text(response: requests.Response, request_id: str) -> str:
        try:
            body = response.json()
        except ValueError as e:
            raise MalformedResponseError(f"Response is not JSON: {e}", request_id)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponseError("Response has no choices[0].message.content", request_id)
        if isinstance(content, list):
            # some servers return content parts even for plain text replies
            content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
        if not isinstance(content, str) or not content:
            raise MalformedResponseError("Assistant message has no text content", request_id)
        return content


@dataclass(frozen=True)
class MockRequest:
    ordinal: int
    key: str
    bundle: PromptBundle


Script = Union[Sequence[str], Mapping[str, str], Callable[[PromptBundle, int], str]]


class MockBackend(ChatBackend):
    """
    Deterministic scripted backend.

    The script is either a sequence answered in call order, a mapping from
    ``prompt_key`` to answer, or a callable ``(bundle, ordinal) -> answer``.
    Running out of script raises ScriptExhaustedError.
    """

    def __init__(
        self,
        script: Script,
        max_parallel: int = 1,
        delay: float = 0.0,
        model_name: str = "mock",
    ):
        super().__init__(max_parallel=max_parallel, model_name=model_name)
        self.script = script
        self.delay = delay
        self.requests: List[MockRequest] = []
        self.in_flight = 0
        self.peak_in_flight = 0
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def _answer(self, bundle: PromptBundle, ordinal: int, key: str) -> str:
        if callable(self.script):
            return self.script(bundle, ordinal)
        if isinstance(self.script, Mapping):
            if key not in self.script:
                raise ScriptExhaustedError(f"No scripted answer for prompt key {key[:12]}")
            return self.script[key]
        if ordinal >= len(self.script):
            raise ScriptExhaustedError(
                f"Script has {len(self.script)} answers, request #{ordinal + 1} asked for more"
            )
        return self.script[ordinal]

    def _complete(self, bundle: PromptBundle) -> CompletionOutcome:
        key = prompt_key(bundle)
        with self._lock:
            ordinal = len(self.requests)
            self.requests.append(MockRequest(ordinal, key, bundle))
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            if self.delay:
                time.sleep(self.delay)
            text = self._answer(bundle, ordinal, key)
        finally:
            with self._lock:
                self.in_flight -= 1
        return CompletionOutcome(text=text, latency_ms=0.0, attempt_count=1, request_id=f"mock-{ordinal}")


def create_backend(config: BackendConfig) -> ChatBackend:
    return HTTPChatBackend(config)


def complete(cfg: BackendConfig, bundle: PromptBundle) -> CompletionOutcome:
    """One-shot helper: send ``bundle`` to the endpoint described by ``cfg``."""
    return HTTPChatBackend(cfg).complete(bundle)


def mock_backend(script: Script, **kwargs: Any) -> MockBackend:
    """Build a MockBackend; keyword arguments go to its constructor."""
    return MockBackend(script, **kwargs)
