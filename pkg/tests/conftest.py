"""Shared fixtures and deterministic test oracles."""
from __future__ import annotations

import hashlib
import random

import pytest

from segann.evaluation import ModelRequest, ModelResponse
from segann.model import Prompt, exact_result
from segann.space import SpaceSpec, Vocabulary
from segann.model import Bracket, Introduction, Position

MARTHA_TEXT = (
    "Martha is planning her Christmas party. "
    "She invited 2 families with 6 people and 3 families with 4 people. "
    "8 people couldn't come due to illness, and 1/4 that number had previous "
    "commitments. How many people show up for Martha's party?"
)


@pytest.fixture
def martha() -> Prompt:
    return Prompt(id="martha", text=MARTHA_TEXT)


def text_hash_oracle(denominator: int = 16, salt: str = ""):
    """Deterministic objective: score depends only on the rendered text.

    Serves as an arbitrary black-box objective with exact rational scores,
    so search-invariant tests cannot accidentally rely on any structure
    beyond determinism.
    """

    def objective(rendered):
        digest = hashlib.md5((salt + rendered.text).encode("utf-8")).digest()
        correct = int.from_bytes(digest[:4], "big") % (denominator + 1)
        return exact_result(correct, denominator)

    return objective


class ScriptedBackend:
    """ModelBackend stub returning canned texts, one per call (cycling)."""

    def __init__(self, replies, backend_id: str = "scripted"):
        self.replies = list(replies)
        self.backend_id = backend_id
        self.calls: list[ModelRequest] = []

    def complete(self, request: ModelRequest) -> ModelResponse:
        self.calls.append(request)
        reply = self.replies[(len(self.calls) - 1) % len(self.replies)]
        if isinstance(reply, Exception):
            raise reply
        return ModelResponse(text=reply, latency_ms=0, backend_id=self.backend_id)


class SeededBackend:
    """ModelBackend stub whose reply depends on the request seed."""

    def __init__(self, by_seed, backend_id: str = "seeded"):
        self.by_seed = by_seed
        self.backend_id = backend_id

    def complete(self, request: ModelRequest) -> ModelResponse:
        reply = self.by_seed(request.seed)
        if isinstance(reply, Exception):
            raise reply
        return ModelResponse(text=reply, latency_ms=0, backend_id=self.backend_id)


def tiny_space(
    n_segments: int,
    labels: tuple[str, ...] = ("", "alpha", "beta"),
    *,
    brackets=(Bracket.SQUARE,),
    positions=(Position.PREFIX,),
    introductions=(Introduction.WITHOUT_INSTRUCTION,),
    annotation_type: str = "importance",
    instruction: str = "",
) -> SpaceSpec:
    return SpaceSpec(
        vocabularies=(
            Vocabulary(
                annotation_type=annotation_type, labels=labels, instruction=instruction
            ),
        ),
        brackets=brackets,
        positions=positions,
        introductions=introductions,
        segment_count=n_segments,
    )


def random_text(rng: random.Random, n_sentences: int = 4) -> str:
    """Plain fuzz text: words of safe letters grouped into sentences."""
    parts = []
    for i in range(n_sentences):
        count = rng.randint(2, 7)
        words = [
            "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(rng.randint(1, 8)))
            for _ in range(count)
        ]
        sentence = " ".join(words).capitalize() + rng.choice(".?!")
        parts.append(sentence + (" " if i < n_sentences - 1 else ""))
    return "".join(parts)
