"""Client side of every external model the evaluation protocol consults.

Two backend families share one calling convention, ``complete(request) ->
str``:

* :class:`HttpChatBackend` talks to a chat-completions style HTTP endpoint,
  with images sent as base64 PNG content parts.
* :class:`ScriptedBackend` answers from a fixed script and is used for
  tests and reproducible fixtures.

The operation functions (``answer_binary``, ``classify_layer`` ...) render a
prompt template, call the backend, and parse the first line of the answer
under a strict grammar. Anything that does not parse raises
:class:`~layerdoc.exceptions.ProtocolError`; nothing is silently defaulted.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any, Callable, Mapping, Protocol

import httpx
import numpy as np

from .document import LAYER_KINDS, BenchmarkInstance, Layer, QAPair, Rect, composite
from .exceptions import PreconditionError, ProtocolError, TransportError
from .pngio import png_data_url

logger = logging.getLogger(__name__)

STEP_CATEGORIES = ("text_edit", "image_edit")
RETRY_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------

TEMPLATE_NAMES = (
    "generate_qa",
    "answer_binary",
    "ocr_verify",
    "classify_layer",
    "aesthetics",
    "step_applies",
    "classify_step",
    "reasoner",
    "editor",
)


class PromptSet:
    """Named prompt templates with ``$placeholder`` fields.

    Lines starting with ``##`` are metadata and are stripped before sending.
    """

    def __init__(self, texts: Mapping[str, str]):
        self.texts = dict(texts)

    @classmethod
    def load(cls, directory=None) -> "PromptSet":
        texts = {}
        for name in TEMPLATE_NAMES:
            if directory is not None and (Path(directory) / f"{name}.txt").exists():
                texts[name] = (Path(directory) / f"{name}.txt").read_text(encoding="utf-8")
            else:
                texts[name] = resources.files("layerdoc.prompts").joinpath(f"{name}.txt").read_text(
                    encoding="utf-8"
                )
        return cls(texts)

    def render(self, name: str, **values) -> str:
        body = "\n".join(l for l in self.texts[name].splitlines() if not l.startswith("##"))
        return Template(body).substitute(**values).strip()

    def hashes(self) -> dict[str, str]:
        return {
            name: hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
            for name, text in sorted(self.texts.items())
        }


DEFAULT_PROMPTS = PromptSet.load()


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JudgeRequest:
    task: str
    prompt: str
    images: tuple = ()
    key: str = ""
    context: str = ""


class Backend(Protocol):
    max_in_flight: int

    def complete(self, request: JudgeRequest) -> str: ...

    def identity(self) -> dict: ...


@dataclass(frozen=True)
class JudgeBackend:
    """Connection settings for one model backend.

    ``auth_env`` names the environment variable holding the bearer token;
    tokens themselves are never stored in configuration.
    """

    kind: str = "scripted_mock"
    model_name: str = "scripted"
    endpoint: str | None = None
    auth_env: str | None = None
    timeout: float = 60.0
    max_in_flight: int = 4
    retry_budget: int = 3
    script: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("remote_http", "scripted_mock"):
            raise ValueError(f"unknown judge backend kind {self.kind!r}")
        if self.kind == "remote_http" and not self.endpoint:
            raise ValueError("remote_http backend requires an endpoint")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")

    def build(self, transport: httpx.BaseTransport | None = None) -> Backend:
        if self.kind == "scripted_mock":
            return ScriptedBackend(dict(self.script), model_name=self.model_name, max_in_flight=self.max_in_flight)
        return HttpChatBackend(
            self.endpoint,
            model_name=self.model_name,
            token=os.environ.get(self.auth_env) if self.auth_env else None,
            timeout=self.timeout,
            max_in_flight=self.max_in_flight,
            retry_budget=self.retry_budget,
            transport=transport,
        )


class ScriptedBackend:
    """Deterministic stand-in for a model endpoint.

    ``script`` maps a task name to a rule. A rule is either a string (the
    answer to every request), a mapping looked up by ``"<context>/<key>"``,
    then ``key``, then ``"*"``, or a callable taking the request.
    """

    def __init__(self, script: Mapping[str, Any], model_name="scripted", max_in_flight=4, delay=0.0):
        self.script = dict(script)
        self.model_name = model_name
        self.max_in_flight = max_in_flight
        self.delay = delay
        self.calls: list[JudgeRequest] = []
        self.in_flight = 0
        self.peak_in_flight = 0
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _lookup(self, request: JudgeRequest) -> str:
        if request.task not in self.script:
            raise LookupError(f"scripted backend has no rule for task {request.task!r}")
        rule = self.script[request.task]
        if callable(rule):
            return rule(request)
        if isinstance(rule, str):
            return rule
        for k in (f"{request.context}/{request.key}", request.key, "*"):
            if k in rule:
                return rule[k]
        raise LookupError(f"no scripted answer for task {request.task!r}, key {request.key!r}")

    def complete(self, request: JudgeRequest) -> str:
        with self._slots:
            with self._lock:
                self.in_flight += 1
                self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
                self.calls.append(request)
            try:
                if self.delay:
                    time.sleep(self.delay)
                return self._lookup(request)
            finally:
                with self._lock:
                    self.in_flight -= 1

    def identity(self) -> dict:
        return {"kind": "scripted_mock", "model_name": self.model_name}


class HttpChatBackend:
    """Chat-completions client with bounded concurrency and retry on transport faults."""

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        token: str | None = None,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        retry_budget: int = 3,
        backoff: float = 0.5,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.model_name = model_name
        self.max_in_flight = max_in_flight
        self.retry_budget = retry_budget
        self.backoff = backoff
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def payload(self, request: JudgeRequest) -> dict:
        content: list[dict] = [{"type": "text", "text": request.prompt}]
        for img in request.images:
            content.append({"type": "image_url", "image_url": {"url": png_data_url(img)}})
        return {
            "model": self.model_name,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        }

    def _post(self, body: dict) -> httpx.Response:
        last: Exception | None = None
        for attempt in range(self.retry_budget + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(self.endpoint, json=body)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code in RETRY_STATUSES:
                last = httpx.HTTPStatusError(f"HTTP {resp.status_code}", request=resp.request, response=resp)
                continue
            return resp
        raise TransportError(f"{self.endpoint}: gave up after {self.retry_budget + 1} attempts: {last}")

    def complete(self, request: JudgeRequest) -> str:
        resp = self._post(self.payload(request))
        if resp.status_code >= 400:
            raise ProtocolError(f"HTTP {resp.status_code} from {self.endpoint}", resp.text)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise ProtocolError("response is not a chat-completions message", resp.text) from None
        if isinstance(content, list):  # content-part form
            content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
        if not isinstance(content, str):
            raise ProtocolError("message content is not text", resp.text)
        return content

    def identity(self) -> dict:
        return {"kind": "remote_http", "model_name": self.model_name, "endpoint": self.endpoint}

    def close(self):
        self._client.close()


# ---------------------------------------------------------------------------
# Response grammar
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Verdict:
    value: Any
    raw_response: str
    latency: float = 0.0
    clamped: bool = False


def first_token(raw: str) -> str:
    """Normalised first line of a response: trimmed, lower-cased, trailing punctuation dropped."""
    lines = raw.strip().splitlines()
    if not lines:
        raise ProtocolError("empty response", raw)
    return lines[0].strip().strip("\"'`*").rstrip(".!").strip().lower()


def parse_yes_no(raw: str) -> str:
    tok = first_token(raw)
    if tok not in ("yes", "no"):
        raise ProtocolError(f"expected yes/no, got {tok!r}", raw)
    return tok


_NUMBER = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)")


def parse_number(raw: str) -> float:
    tok = first_token(raw)
    if not _NUMBER.fullmatch(tok):
        raise ProtocolError(f"expected a decimal number, got {tok!r}", raw)
    return float(tok)


def parse_tristate(raw: str) -> float:
    value = parse_number(raw)
    if value not in (0.0, 0.5, 1.0):
        raise ProtocolError(f"expected 0, 0.5 or 1, got {value}", raw)
    return value


def parse_kind(raw: str) -> str:
    tok = first_token(raw)
    if tok not in LAYER_KINDS:
        raise ProtocolError(f"expected one of {LAYER_KINDS}, got {tok!r}", raw)
    return tok


def parse_step_category(raw: str) -> str:
    tok = first_token(raw).replace("-", "_").replace(" ", "_")
    if tok not in STEP_CATEGORIES:
        raise ProtocolError(f"expected one of {STEP_CATEGORIES}, got {tok!r}", raw)
    return tok


def parse_qa(raw: str) -> tuple[str, str]:
    questions, answers = [], []
    for line in raw.strip().splitlines():
        line = line.strip()
        if line[:2].lower() == "q:":
            questions.append(line[2:].strip())
        elif line[:2].lower() == "a:":
            answers.append(line[2:].strip())
    if len(questions) != 1 or len(answers) != 1 or not questions[0]:
        raise ProtocolError("expected exactly one 'Q:' line and one 'A:' line", raw)
    try:
        answer = parse_yes_no(answers[0])
    except ProtocolError as exc:
        raise ProtocolError(str(exc), raw) from None
    return questions[0], answer


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _ask(backend: Backend, task, prompt, images=(), key="", context="") -> tuple[str, float]:
    start = time.perf_counter()
    raw = backend.complete(JudgeRequest(task, prompt, tuple(images), key, context))
    return raw, time.perf_counter() - start


def generate_qa(
    instance: BenchmarkInstance, backend: Backend, prompts: PromptSet = DEFAULT_PROMPTS
) -> list[QAPair]:
    """One yes/no question per gold-edited layer, or the instance's precomputed pairs."""
    if instance.qa_pairs is not None:
        return list(instance.qa_pairs)
    rendered = composite(instance.document)
    pairs = []
    for layer in instance.document.layers:
        text = instance.gold_layer_instructions.get(layer.id)
        if text is None:
            continue
        prompt = prompts.render(
            "generate_qa", instruction=instance.instruction, layer_id=layer.id, layer_instruction=text
        )
        raw, _ = _ask(backend, "generate_qa", prompt, (rendered,), layer.id, instance.id)
        question, expected = parse_qa(raw)
        pairs.append(QAPair(question, expected, layer.id))
    return pairs


def answer_binary(image, question: str, backend: Backend, prompts: PromptSet = DEFAULT_PROMPTS, context="") -> Verdict:
    raw, latency = _ask(
        backend, "answer_binary", prompts.render("answer_binary", question=question), (image,), question, context
    )
    return Verdict(parse_yes_no(raw), raw, latency)


def ocr_and_verify(
    image, region: Rect, instruction: str, backend: Backend, prompts: PromptSet = DEFAULT_PROMPTS, context="", key=None
) -> Verdict:
    img = np.asarray(image)
    h, w = img.shape[:2]
    x, y, rw, rh = region
    if rw <= 0 or rh <= 0 or x < 0 or y < 0 or x + rw > w or y + rh > h:
        raise PreconditionError(f"region {tuple(region)} lies outside the {w}x{h} image")
    prompt = prompts.render("ocr_verify", x=x, y=y, w=rw, h=rh, instruction=instruction)
    crop = img[y : y + rh, x : x + rw]
    raw, latency = _ask(backend, "ocr_verify", prompt, (img, crop), key or f"{x},{y},{rw},{rh}", context)
    return Verdict(parse_tristate(raw), raw, latency)


def classify_layer(layer: Layer, backend: Backend, prompts: PromptSet = DEFAULT_PROMPTS, context="") -> Verdict:
    raw, latency = _ask(
        backend, "classify_layer", prompts.render("classify_layer", layer_id=layer.id), (layer.pixels,), layer.id, context
    )
    return Verdict(parse_kind(raw), raw, latency)


def aesthetics(image, backend: Backend, prompts: PromptSet = DEFAULT_PROMPTS, context="") -> Verdict:
    """Aesthetic rating in [1, 10]; out-of-range answers are clamped and flagged."""
    raw, latency = _ask(backend, "aesthetics", prompts.render("aesthetics"), (image,), context, context)
    value = parse_number(raw)
    if not math.isfinite(value):
        raise ProtocolError(f"non-finite aesthetics score {value}", raw)
    clamped = min(10.0, max(1.0, value))
    if clamped != value:
        logger.warning("aesthetics score %s clamped to %s", value, clamped)
    return Verdict(clamped, raw, latency, clamped=clamped != value)


def step_applies(step: str, layer: Layer, backend: Backend, prompts: PromptSet = DEFAULT_PROMPTS, context="") -> Verdict:
    prompt = prompts.render("step_applies", step=step, layer_id=layer.id, kind=layer.kind)
    raw, latency = _ask(backend, "step_applies", prompt, (layer.pixels,), f"{step}|{layer.id}", context)
    return Verdict(parse_yes_no(raw) == "yes", raw, latency)


def classify_step(step: str, backend: Backend, prompts: PromptSet = DEFAULT_PROMPTS, context="") -> Verdict:
    raw, latency = _ask(backend, "classify_step", prompts.render("classify_step", step=step), (), step, context)
    return Verdict(parse_step_category(raw), raw, latency)
