"""Reason-then-edit pipeline over a layered document.

For every layer a reasoner decides whether it must change and, if so,
writes a layer-level prompt. Selected layers go to an image editor
together with their alpha mask; the editor output is clipped back to the
original alpha support and the document is reassembled in the original
z order. Layers are decided independently of one another.
"""
from __future__ import annotations

import base64
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Protocol

import httpx
import numpy as np

from .document import BenchmarkInstance, Document, Layer, Mask, alpha_mask, apply_layer_edit, composite, replace_layers
from .exceptions import (
    DecisionTokenError,
    DuplicateTagError,
    FormatError,
    MissingTagError,
    PromptMismatchError,
    ProtocolError,
    TagOrderError,
    TransportError,
)
from .judge import DEFAULT_PROMPTS, Backend, HttpChatBackend, JudgeRequest, PromptSet
from .pngio import decode_png

TAGS = ("think", "decision", "prompt")
DECISION_TOKENS = {"yes": True, "1": True, "no": False, "0": False}
_TAG = re.compile(r"<(/?)(think|decision|prompt)>", re.IGNORECASE)


@dataclass(frozen=True)
class ReasonerOutput:
    layer_id: str
    think: str
    decision: bool
    prompt: str | None = None
    error: str | None = None  # FormatError.reason when the raw text was rejected
    raw: str | None = None


def parse_reasoner(text: str, layer_id: str) -> ReasonerOutput:
    """Parse ``<think>..</think><decision>..</decision>[<prompt>..</prompt>]``.

    Only whitespace may appear outside the tags. The prompt block must be
    present (and non-empty) exactly when the decision is positive.
    """
    segments: list[tuple[str, str]] = []
    pos = 0
    open_tag = None
    body_start = 0
    for m in _TAG.finditer(text):
        closing, name = m.group(1) == "/", m.group(2).lower()
        if open_tag is None:
            if closing:
                raise MissingTagError(f"</{name}> without opening tag", text)
            if text[pos : m.start()].strip():
                raise FormatError("text outside of tags", text)
            open_tag, body_start = name, m.end()
        else:
            if not closing:
                raise FormatError(f"<{name}> nested inside <{open_tag}>", text)
            if name != open_tag:
                raise MissingTagError(f"<{open_tag}> closed by </{name}>", text)
            segments.append((name, text[body_start : m.start()]))
            open_tag = None
            pos = m.end()
    if open_tag is not None:
        raise MissingTagError(f"<{open_tag}> is never closed", text)
    if text[pos:].strip():
        raise FormatError("text outside of tags", text)

    names = [n for n, _ in segments]
    for tag in TAGS:
        if names.count(tag) > 1:
            raise DuplicateTagError(f"<{tag}> appears {names.count(tag)} times", text)
    for tag in ("think", "decision"):
        if tag not in names:
            raise MissingTagError(f"missing <{tag}>", text)
    if names != [t for t in TAGS if t in names]:
        raise TagOrderError(f"tags out of order: {names}", text)

    body = dict(segments)
    token = body["decision"].strip().lower()
    if token not in DECISION_TOKENS:
        raise DecisionTokenError(f"decision {token!r} is not one of yes/no/1/0", text)
    decision = DECISION_TOKENS[token]
    prompt = body.get("prompt")
    if prompt is not None:
        prompt = prompt.strip()
    if decision and not prompt:
        raise PromptMismatchError("positive decision without a prompt", text)
    if not decision and prompt is not None:
        raise PromptMismatchError("negative decision with a prompt", text)
    return ReasonerOutput(layer_id, body["think"].strip(), decision, prompt or None, raw=text)


def format_reasoner(think: str, decision: bool, prompt: str | None = None) -> str:
    """Inverse of :func:`parse_reasoner`; handy for scripting oracle reasoners."""
    out = f"<think>{think}</think><decision>{'yes' if decision else 'no'}</decision>"
    if decision:
        out += f"<prompt>{prompt}</prompt>"
    return out


# ---------------------------------------------------------------------------
# Editors
# ---------------------------------------------------------------------------


class Editor(Protocol):
    def edit(self, layer: Layer, prompt: str, mask: Mask, context: str = "") -> np.ndarray: ...

    def identity(self) -> dict: ...


class IdentityEditor:
    """Returns the layer unchanged."""

    def edit(self, layer, prompt, mask, context=""):
        return np.array(layer.pixels)

    def identity(self):
        return {"kind": "identity_mock"}


class ScriptedEditor:
    """Canned rasters keyed by layer id (or ``"<context>/<layer id>"``)."""

    def __init__(self, rasters: Mapping[str, np.ndarray], fill: Mapping[str, tuple] | None = None):
        self.rasters = dict(rasters)
        self.fill = dict(fill or {})

    def edit(self, layer, prompt, mask, context=""):
        for key in (f"{context}/{layer.id}", layer.id, "*"):
            if key in self.rasters:
                return np.asarray(self.rasters[key], dtype=np.uint8)
            if key in self.fill:
                out = np.empty_like(layer.pixels)
                out[...] = np.asarray(self.fill[key], dtype=np.uint8)
                return out
        raise LookupError(f"scripted editor has nothing for layer {layer.id!r}")

    def identity(self):
        return {"kind": "scripted_mock", "layers": sorted(set(self.rasters) | set(self.fill))}


class HttpEditor:
    """Editor behind the same chat-style HTTP protocol as the judges.

    The request carries the prompt, the layer PNG and the mask PNG; the
    reply's message content must be a base64 PNG (optionally a data URL).
    """

    def __init__(self, client: HttpChatBackend, prompts: PromptSet = DEFAULT_PROMPTS):
        self.client = client
        self.prompts = prompts

    def edit(self, layer, prompt, mask, context=""):
        mask_img = np.zeros(layer.pixels.shape, dtype=np.uint8)
        mask_img[mask.bits] = 255
        request = JudgeRequest(
            "edit", self.prompts.render("editor", prompt=prompt), (layer.pixels, mask_img), layer.id, context
        )
        content = self.client.complete(request).strip()
        if content.startswith("data:"):
            content = content.split(",", 1)[-1]
        try:
            pixels = decode_png(base64.b64decode(content, validate=True))
        except Exception:
            raise ProtocolError("editor reply is not a base64 PNG", content[:200]) from None
        if pixels.shape != layer.pixels.shape:
            raise ProtocolError(f"editor returned {pixels.shape}, expected {layer.pixels.shape}")
        return pixels

    def identity(self):
        return {"kind": "remote_http", **self.client.identity()}


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AgentResult:
    document: Document
    outputs: list[ReasonerOutput]

    @property
    def selected(self) -> set[str]:
        return {o.layer_id for o in self.outputs if o.decision}


class InstanceFailure(RuntimeError):
    pass


def reason_about_layer(
    instance: BenchmarkInstance, layer: Layer, rendered, reasoner: Backend, prompts: PromptSet = DEFAULT_PROMPTS
) -> ReasonerOutput:
    prompt = prompts.render("reasoner", layer_id=layer.id, kind=layer.kind, instruction=instance.instruction)
    raw = reasoner.complete(JudgeRequest("reason", prompt, (rendered, layer.pixels), layer.id, instance.id))
    try:
        return parse_reasoner(raw, layer.id)
    except FormatError as exc:
        return ReasonerOutput(layer.id, "", False, None, error=exc.reason, raw=raw)


def run_agent(
    instance: BenchmarkInstance,
    reasoner: Backend,
    editor: Editor,
    prompts: PromptSet = DEFAULT_PROMPTS,
    mask_threshold=0.5,
    workers: int = 1,
) -> AgentResult:
    """Edit exactly the layers the reasoner selects and reassemble the document.

    A reasoner reply that breaks the tag grammar counts as a no-op for that
    layer (``error`` is set on its output). Editor transport failures abort
    the instance with :class:`InstanceFailure`.
    """
    doc = instance.document
    rendered = composite(doc)

    def decide(layer):
        return reason_about_layer(instance, layer, rendered, reasoner, prompts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(decide, doc.layers))
    else:
        outputs = [decide(layer) for layer in doc.layers]

    edits = {}
    for layer, out in zip(doc.layers, outputs):
        if not out.decision:
            continue
        try:
            edited = editor.edit(layer, out.prompt, alpha_mask(layer, mask_threshold), context=instance.id)
        except (TransportError, httpx.HTTPError) as exc:
            raise InstanceFailure(f"editor failed on layer {layer.id!r}: {exc}") from exc
        edits[layer.id] = apply_layer_edit(layer, edited)
    return AgentResult(replace_layers(doc, edits), outputs)
