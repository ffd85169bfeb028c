"""Shipped text presets: per-type instructions, system prompts, annotator prompts.

The texts live in ``segann/data/*.json`` and are loaded once per process.
Level names for the ``context`` and ``intent`` label sets are generic
defaults chosen by this package; override them via a space config file if
you need different wording.
"""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .errors import ContractError

#: Default non-neutral label levels per annotation type, weakest first.
DEFAULT_LABELS: dict[str, tuple[str, ...]] = {
    "importance": ("not important", "important", "very important"),
    "context": ("background", "supporting", "key context"),
    "intent": ("informational", "instructional", "decisive"),
    "priority": ("low", "medium", "high"),
}

#: Order in which the built-in annotation types enumerate.
DEFAULT_TYPE_ORDER = ("importance", "context", "intent", "priority")


@lru_cache(maxsize=None)
def _load(name: str) -> dict[str, str]:
    text = resources.files("segann.data").joinpath(name).read_text(encoding="utf-8")
    return json.loads(text)


def annotation_instruction(annotation_type: str) -> str:
    """Instructional sentence describing one built-in annotation type."""
    table = _load("annotation_instructions.json")
    try:
        return table[annotation_type]
    except KeyError:
        raise ContractError(
            f"no instruction preset for annotation type {annotation_type!r}; "
            f"known: {sorted(table)}"
        ) from None


def system_prompt(preset: str) -> str:
    """Dataset-describing system prompt, keyed by dataset preset name."""
    table = _load("system_prompts.json")
    try:
        return table[preset.lower()]
    except KeyError:
        raise ContractError(
            f"no system prompt preset {preset!r}; known: {sorted(table)}"
        ) from None


def annotator_instruction(preset: str) -> str:
    """System prompt for one-shot model segmentation-and-annotation."""
    table = _load("annotator_prompts.json")
    try:
        return table[preset.lower()]
    except KeyError:
        raise ContractError(
            f"no annotator preset {preset!r}; known: {sorted(table)}"
        ) from None


def system_prompt_names() -> list[str]:
    return sorted(_load("system_prompts.json"))


def annotator_names() -> list[str]:
    return sorted(_load("annotator_prompts.json"))
