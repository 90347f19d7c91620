"""Intent-inference client: builds the editing-intent prompt, calls any
chat-completion-style HTTP endpoint with the original and overlay images
attached, and parses the reply into a task label plus candidate prompts.

The optimizer and metrics never depend on this module.
"""

from __future__ import annotations

import base64
import json
import os
import random
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import httpx

from .schedule import TaskKind

MAX_CANDIDATES = 10
MAX_CANDIDATE_WORDS = 60

# The instruction block sent to the model. The wording is part of the wire
# protocol: downstream parsing and the response fixtures rely on it.
PROMPT_TEMPLATE = """Refer to the original image, and the "dragged" image with the blue starting region, estimated green target region, and the arrow direction. You need to describe the content and the object for editing of the picture in English, in terms of "background details" and "editing changes". Then you should guess the editing intents from the user by selecting one label for each answer, where the label classes have {relocation, deformation, rotation}.

Your tasks:

- (a) You should first provide a detailed description about the original image (e.g., include, but are not limited to objects, spatial relationship, color, style, structure). Then try to describe the motion/editing in short words.

- (b) You should provide the ten most possible guesses about the static condition of the after-dragged image, and at most 60 words for each. See if you can provide more details to facilitate the editing."""


class IntentError(Exception):
    pass


class IntentConfigError(IntentError):
    """Client misconfiguration detected before any network call."""


class IntentTimeout(IntentError):
    """The endpoint did not answer within the timeout (after one retry)."""


class IntentServiceError(IntentError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"endpoint returned HTTP {status}")


class IntentParseError(IntentError):
    def __init__(self, message: str, raw_text: str):
        self.raw_text = raw_text
        super().__init__(f"{message}\n--- raw response ---\n{raw_text}")


@dataclass(frozen=True)
class IntentRequest:
    original_image: Path | bytes
    overlay_image: Path | bytes
    prompt: str


@dataclass(frozen=True)
class IntentResult:
    label: TaskKind
    candidates: tuple[str, ...]
    chosen_index: Optional[int] = None
    truncated: tuple[int, ...] = ()

    def __post_init__(self):
        if not 1 <= len(self.candidates) <= MAX_CANDIDATES:
            raise IntentError(
                f"candidate count must lie in [1, {MAX_CANDIDATES}], got {len(self.candidates)}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "label": self.label.value,
                "candidates": list(self.candidates),
                "chosen_index": self.chosen_index,
                "truncated": list(self.truncated),
            }
        )


@dataclass(frozen=True)
class IntentClientConfig:
    endpoint_url: str
    model: str = "gpt-4o"
    api_key_env: str = "DRAGKIT_INTENT_API_KEY"
    timeout_s: float = 30.0
    retry_jitter_s: tuple[float, float] = (0.05, 0.25)


def build_prompt(sample_meta: Optional[dict] = None) -> str:
    """The protocol prompt, optionally followed by sample context.

    Deterministic: identical metadata yields identical text.
    """
    parts = [PROMPT_TEMPLATE]
    if sample_meta:
        ctx = []
        if "background_prompt" in sample_meta:
            ctx.append(f"Known background: {sample_meta['background_prompt']}")
        if "region_count" in sample_meta:
            ctx.append(f"Number of marked regions: {sample_meta['region_count']}")
        if ctx:
            parts.append("\nContext:\n" + "\n".join(ctx))
    return "\n".join(parts)


_LABEL_LINE = re.compile(
    r"label\s*[:=\-]?\s*\"?(\w+)\"?", re.IGNORECASE
)
_CLASS_WORDS = re.compile(
    r"\b(relocation|deformation|rotation)\b", re.IGNORECASE
)
_NUMBERED = re.compile(r"^\s*(\d{1,2})[.)]\s+(.*\S)\s*$")


def parse_response(text: str) -> IntentResult:
    """Extract one task label and up to ten numbered candidate prompts.

    Accepted syntax (documented convention): the label appears on a line
    containing "label" (e.g. "Label: rotation") or, failing that, as the
    first standalone class word; candidates are numbered lines "1. ..." or
    "1) ...". Candidates longer than 60 words are truncated and flagged.
    """
    label: Optional[TaskKind] = None
    for line in text.splitlines():
        m = _LABEL_LINE.search(line)
        if m:
            word = m.group(1).lower()
            if word in (t.value for t in TaskKind):
                label = TaskKind(word)
                break
            raise IntentParseError(f"invalid task label {word!r}", text)
    if label is None:
        m = _CLASS_WORDS.search(text)
        if m:
            label = TaskKind(m.group(1).lower())
    if label is None:
        raise IntentParseError("no recognizable task label", text)

    candidates: list[str] = []
    truncated: list[int] = []
    for line in text.splitlines():
        m = _NUMBERED.match(line)
        if not m:
            continue
        if len(candidates) >= MAX_CANDIDATES:
            break
        body = m.group(2).strip()
        words = body.split()
        if len(words) > MAX_CANDIDATE_WORDS:
            body = " ".join(words[:MAX_CANDIDATE_WORDS])
            truncated.append(len(candidates))
        candidates.append(body)
    if not candidates:
        raise IntentParseError("no candidate descriptions found", text)
    return IntentResult(
        label=label, candidates=tuple(candidates), truncated=tuple(truncated)
    )


def _image_b64(ref: Path | bytes) -> str:
    data = ref if isinstance(ref, bytes) else Path(ref).read_bytes()
    return base64.b64encode(data).decode("ascii")


def request_intent(config: IntentClientConfig, request: IntentRequest) -> IntentResult:
    """One chat-completion round trip (plus a single retry on timeout or
    5xx) through the configured endpoint; credentials come from the
    environment variable named in the config."""
    api_key = os.environ.get(config.api_key_env)
    if not api_key:
        raise IntentConfigError(
            f"environment variable {config.api_key_env} is not set"
        )
    body = {
        "model": config.model,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt},
                    {
                        "type": "image_url",
                        "image_url": {
                            "url": "data:image/png;base64,"
                            + _image_b64(request.original_image)
                        },
                    },
                    {
                        "type": "image_url",
                        "image_url": {
                            "url": "data:image/png;base64,"
                            + _image_b64(request.overlay_image)
                        },
                    },
                ],
            }
        ],
    }
    headers = {"Authorization": f"Bearer {api_key}"}

    last_error: Optional[IntentError] = None
    for attempt in range(2):
        if attempt == 1:
            time.sleep(random.uniform(*config.retry_jitter_s))
        try:
            resp = httpx.post(
                config.endpoint_url, json=body, headers=headers, timeout=config.timeout_s
            )
        except httpx.TimeoutException:
            last_error = IntentTimeout(
                f"no answer from {config.endpoint_url} within {config.timeout_s}s"
            )
            continue
        except httpx.HTTPError as e:
            last_error = IntentServiceError(0, f"transport failure: {e}")
            continue
        if 200 <= resp.status_code < 300:
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as e:
                raise IntentParseError(
                    f"malformed completion envelope: {e}", resp.text
                ) from e
            return parse_response(content)
        if 500 <= resp.status_code < 600:
            last_error = IntentServiceError(resp.status_code, resp.text)
            continue
        raise IntentServiceError(resp.status_code, resp.text)
    assert last_error is not None
    raise last_error
