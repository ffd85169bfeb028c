"""Core value types: prompts, segmentations, annotation schemes and results.

Everything here is an immutable value with structural equality, safe to
share across threads. Validation that needs cross-object context (a
segmentation against its prompt) lives in :func:`validate` rather than in
constructors, so invalid candidates can be built and then reported on.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .errors import ContractError


class AnswerKind(str, Enum):
    NUMERIC = "numeric"
    MULTIPLE_CHOICE = "multiple_choice"
    BOOLEAN = "boolean"
    FREE_TEXT = "free_text"


class Bracket(str, Enum):
    SQUARE = "square"
    ANGLE = "angle"
    CURLY = "curly"
    ROUND = "round"


class Position(str, Enum):
    PREFIX = "prefix"
    SUFFIX = "suffix"


class Introduction(str, Enum):
    WITH_INSTRUCTION = "with_instruction"
    WITHOUT_INSTRUCTION = "without_instruction"


#: Names of the built-in annotation types; any other non-empty string is a
#: custom type.
IMPORTANCE = "importance"
CONTEXT = "context"
INTENT = "intent"
PRIORITY = "priority"

#: Index of the neutral (empty string) label in every scheme. Rendering a
#: segment with this label emits the segment verbatim.
NEUTRAL_INDEX = 0


@dataclass(frozen=True)
class Prompt:
    """A text to be segmented and annotated, with an optional gold answer."""

    id: str
    text: str
    answer: str | None = None
    answer_kind: AnswerKind = AnswerKind.FREE_TEXT
    source: str | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ContractError("prompt text must be non-empty")
        if not self.id:
            raise ContractError("prompt id must be non-empty")


@dataclass(frozen=True)
class Segmentation:
    """An ordered contiguous partition of a prompt's text.

    A segmentation is *valid* against its prompt when every segment is
    non-empty and their in-order concatenation reproduces the prompt text
    exactly. Use :func:`validate` to check; construction is unchecked so
    that candidate partitions can be inspected and reported on.
    """

    prompt_id: str
    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def text(self) -> str:
        return "".join(self.segments)

    def to_dict(self) -> dict:
        return {"prompt_id": self.prompt_id, "segments": list(self.segments)}

    @classmethod
    def from_dict(cls, d: dict) -> "Segmentation":
        return cls(prompt_id=d["prompt_id"], segments=tuple(d["segments"]))


@dataclass(frozen=True)
class AnnotationScheme:
    """The categorical dimensions of one annotation style.

    ``labels[0]`` is always the neutral empty string, so every assignment
    vector over any scheme includes the unannotated prompt as a point.
    """

    annotation_type: str
    labels: tuple[str, ...]
    bracket: Bracket
    position: Position
    introduction: Introduction
    instruction_text: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.annotation_type:
            raise ContractError("annotation_type must be non-empty")
        if not self.labels or self.labels[0] != "":
            raise ContractError("labels[0] must be the neutral empty string")
        if len(set(self.labels)) != len(self.labels):
            raise ContractError("labels must not contain duplicates")
        has_text = bool(self.instruction_text)
        wants_text = self.introduction == Introduction.WITH_INSTRUCTION
        if has_text != wants_text:
            raise ContractError(
                "instruction_text must be non-empty exactly when the scheme "
                "uses the with-instruction condition"
            )


@dataclass(frozen=True)
class LabelAssignment:
    """Per-segment label choices, as indices into a scheme's labels."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(self.indices))
        if any(i < 0 for i in self.indices):
            raise ContractError("label indices must be non-negative")


@dataclass(frozen=True)
class AnnotationConfig:
    """One point of the search space: a scheme plus an assignment."""

    scheme: AnnotationScheme
    assignment: LabelAssignment

    def __post_init__(self) -> None:
        n_labels = len(self.scheme.labels)
        for i in self.assignment.indices:
            if i >= n_labels:
                raise ContractError(
                    f"assignment index {i} out of range for {n_labels} labels"
                )

    @property
    def label_values(self) -> tuple[str, ...]:
        return tuple(self.scheme.labels[i] for i in self.assignment.indices)

    @property
    def is_neutral(self) -> bool:
        return (
            all(i == NEUTRAL_INDEX for i in self.assignment.indices)
            and self.scheme.introduction == Introduction.WITHOUT_INSTRUCTION
        )


@dataclass(frozen=True)
class AnnotatedPrompt:
    """A rendered annotated prompt together with its full provenance."""

    text: str
    segmentation: Segmentation
    config: AnnotationConfig


@dataclass(frozen=True)
class ObjectiveResult:
    """Outcome of evaluating one rendered prompt over repeated seeds."""

    score: float
    per_seed_correct: tuple[bool, ...]
    self_consistency: float
    seeds: int
    failed_seeds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_seed_correct", tuple(self.per_seed_correct))
        object.__setattr__(self, "failed_seeds", tuple(self.failed_seeds))
        if self.seeds < 1:
            raise ContractError("seeds must be >= 1")
        if len(self.per_seed_correct) != self.seeds:
            raise ContractError("per_seed_correct must have one entry per seed")
        expected = sum(self.per_seed_correct) / self.seeds
        if self.score != expected:
            raise ContractError(
                f"score {self.score} != correct/seeds {expected}"
            )
        if not 0.0 <= self.self_consistency <= 1.0:
            raise ContractError("self_consistency must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "per_seed_correct": list(self.per_seed_correct),
            "self_consistency": self.self_consistency,
            "seeds": self.seeds,
            "failed_seeds": list(self.failed_seeds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveResult":
        return cls(
            score=d["score"],
            per_seed_correct=tuple(d["per_seed_correct"]),
            self_consistency=d["self_consistency"],
            seeds=d["seeds"],
            failed_seeds=tuple(d.get("failed_seeds", ())),
        )


def exact_result(correct: int, total: int) -> ObjectiveResult:
    """Build an ObjectiveResult for a deterministic score of correct/total.

    The per-seed outcomes are a canonical prefix-of-falses layout; the
    self-consistency is the majority fraction between the two outcome
    classes. Used by synthetic objectives whose score is an exact rational.
    """
    if total < 1 or not 0 <= correct <= total:
        raise ContractError("need 0 <= correct <= total with total >= 1")
    per_seed = tuple(i >= total - correct for i in range(total))
    return ObjectiveResult(
        score=correct / total,
        per_seed_correct=per_seed,
        self_consistency=max(correct, total - correct) / total,
        seeds=total,
    )


def neutral_config(segmentation: Segmentation, scheme: AnnotationScheme) -> AnnotationConfig:
    """The all-neutral, no-instruction configuration for a segmentation.

    Rendering the result reproduces the original prompt text byte-exactly.
    """
    plain = replace(
        scheme,
        introduction=Introduction.WITHOUT_INSTRUCTION,
        instruction_text="",
    )
    zeros = LabelAssignment(indices=(NEUTRAL_INDEX,) * len(segmentation.segments))
    return AnnotationConfig(scheme=plain, assignment=zeros)


def validate(prompt: Prompt, segmentation: Segmentation) -> str | None:
    """Check a segmentation against its prompt.

    Returns None when all invariants hold, otherwise a message describing
    the first violated invariant.
    """
    if len(segmentation.segments) < 1:
        return "segmentation has no segments"
    for pos, seg in enumerate(segmentation.segments):
        if seg == "":
            return f"segment {pos} is empty"
    joined = segmentation.text
    if joined != prompt.text:
        return (
            "concatenation mismatch: segments join to "
            f"{joined!r}, prompt text is {prompt.text!r}"
        )
    if segmentation.prompt_id != prompt.id:
        return (
            f"prompt id mismatch: segmentation carries {segmentation.prompt_id!r}, "
            f"prompt is {prompt.id!r}"
        )
    return None
