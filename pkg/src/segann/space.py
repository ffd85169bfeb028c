"""The annotation configuration space: counting, enumeration and rendering.

A :class:`SpaceSpec` describes a grid over (annotation type, bracket,
position, introduction condition, per-segment label assignment). Each
type's :class:`Vocabulary` lists exactly the label values its assignment
digits range over. Listing the neutral empty string as a label puts the
unannotated prompt inside the enumerated space; omitting it (as the
default grid does, with three non-neutral levels per type) keeps the grid
at levels-only combinations and leaves the neutral point to the search
driver, which always evaluates it as trial zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterator

from . import presets
from .errors import ContractError
from .model import (
    AnnotatedPrompt,
    AnnotationConfig,
    AnnotationScheme,
    Bracket,
    Introduction,
    LabelAssignment,
    Position,
    Segmentation,
)

BRACKET_PAIRS: dict[Bracket, tuple[str, str]] = {
    Bracket.SQUARE: ("[", "]"),
    Bracket.ANGLE: ("⟨", "⟩"),
    Bracket.CURLY: ("{", "}"),
    Bracket.ROUND: ("(", ")"),
}

#: Separator between an instruction sentence and the annotated body.
INSTRUCTION_SEPARATOR = "\n\n"

#: Bracket variants of the default grid. The full four-variant set is
#: available via full_space().
DEFAULT_BRACKETS = (Bracket.SQUARE, Bracket.ANGLE, Bracket.CURLY)


@dataclass(frozen=True)
class Vocabulary:
    """One annotation type's searchable label values.

    ``labels`` are the values an assignment digit may take, in enumeration
    order. If the neutral empty string is included it must come first.
    """

    annotation_type: str
    labels: tuple[str, ...]
    instruction: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.annotation_type:
            raise ContractError("annotation_type must be non-empty")
        if not self.labels:
            raise ContractError("vocabulary needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ContractError("vocabulary labels must be distinct")
        if "" in self.labels and self.labels[0] != "":
            raise ContractError("the neutral label must be listed first")

    @property
    def includes_neutral(self) -> bool:
        return self.labels[0] == ""

    def scheme_labels(self) -> tuple[str, ...]:
        """Full scheme label vector: neutral first, then non-neutral values."""
        return ("",) + tuple(lab for lab in self.labels if lab != "")


@dataclass(frozen=True)
class SpaceSpec:
    """A finite grid of annotation configurations."""

    vocabularies: tuple[Vocabulary, ...]
    brackets: tuple[Bracket, ...]
    positions: tuple[Position, ...]
    introductions: tuple[Introduction, ...]
    segment_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "vocabularies", tuple(self.vocabularies))
        object.__setattr__(self, "brackets", tuple(self.brackets))
        object.__setattr__(self, "positions", tuple(self.positions))
        object.__setattr__(self, "introductions", tuple(self.introductions))
        if not self.vocabularies:
            raise ContractError("space needs at least one vocabulary")
        if not self.brackets or not self.positions or not self.introductions:
            raise ContractError("every categorical dimension needs at least one value")
        if len({v.annotation_type for v in self.vocabularies}) != len(self.vocabularies):
            raise ContractError("duplicate annotation type in space")
        if self.segment_count < 1:
            raise ContractError("segment_count must be >= 1")
        if Introduction.WITH_INSTRUCTION in self.introductions:
            for voc in self.vocabularies:
                if not voc.instruction:
                    raise ContractError(
                        f"type {voc.annotation_type!r} has no instruction text but "
                        "the space includes the with-instruction condition"
                    )

    def labels_per_type(self) -> int:
        """Common label count per type; error when types disagree."""
        sizes = {len(v.labels) for v in self.vocabularies}
        if len(sizes) != 1:
            raise ContractError("vocabularies have differing label counts")
        return sizes.pop()

    def vocabulary_for(self, annotation_type: str) -> Vocabulary | None:
        for voc in self.vocabularies:
            if voc.annotation_type == annotation_type:
                return voc
        return None


def count_assignments(segment_count: int, labels: int) -> int:
    """Number of per-segment labellings: labels ** segment_count, exact."""
    if segment_count < 1 or labels < 1:
        raise ContractError("need segment_count >= 1 and labels >= 1")
    return labels**segment_count


def count_configs(spec: SpaceSpec) -> int:
    """Total grid size: brackets x positions x introductions x labellings per type."""
    per_type = sum(
        count_assignments(spec.segment_count, len(v.labels)) for v in spec.vocabularies
    )
    return per_type * len(spec.brackets) * len(spec.positions) * len(spec.introductions)


def count_contiguous_segmentations(m_units: int) -> int:
    """Number of ways to split m ordered units into contiguous non-empty runs.

    Each of the m-1 gaps is independently cut or not, so the count is
    2 ** (m - 1). Exact arbitrary-precision integer.
    """
    if m_units < 1:
        raise ContractError("m_units must be >= 1")
    return 2 ** (m_units - 1)


def wrap_label(label: str, bracket: Bracket) -> str:
    """Enclose a non-neutral label in the bracket variant's characters."""
    if label == "":
        raise ContractError("the neutral label is never wrapped")
    opener, closer = BRACKET_PAIRS[bracket]
    return f"{opener}{label}{closer}"


def _scheme(voc: Vocabulary, bracket: Bracket, position: Position,
            introduction: Introduction) -> AnnotationScheme:
    return AnnotationScheme(
        annotation_type=voc.annotation_type,
        labels=voc.scheme_labels(),
        bracket=bracket,
        position=position,
        introduction=introduction,
        instruction_text=voc.instruction
        if introduction == Introduction.WITH_INSTRUCTION
        else "",
    )


def _digit_to_scheme_index(voc: Vocabulary) -> tuple[int, ...]:
    scheme_labels = voc.scheme_labels()
    return tuple(scheme_labels.index(lab) for lab in voc.labels)


def enumerate_configs(spec: SpaceSpec) -> Iterator[AnnotationConfig]:
    """All configurations of the grid, in a fixed lexicographic order.

    Order is (type, bracket, position, introduction, assignment) with
    assignment digits fastest and the rightmost segment's digit fastest of
    all. Every call yields an identical, restartable stream.
    """
    n = spec.segment_count
    for voc in spec.vocabularies:
        index_of = _digit_to_scheme_index(voc)
        base = len(voc.labels)
        for bracket in spec.brackets:
            for position in spec.positions:
                for introduction in spec.introductions:
                    scheme = _scheme(voc, bracket, position, introduction)
                    for flat in range(base**n):
                        digits = _digits(flat, base, n)
                        yield AnnotationConfig(
                            scheme=scheme,
                            assignment=LabelAssignment(
                                indices=tuple(index_of[d] for d in digits)
                            ),
                        )


def _digits(value: int, base: int, width: int) -> tuple[int, ...]:
    out = [0] * width
    for pos in range(width - 1, -1, -1):
        value, out[pos] = divmod(value, base)
    return tuple(out)


def config_at(spec: SpaceSpec, index: int) -> AnnotationConfig:
    """The index-th configuration of enumerate_configs(spec), computed directly."""
    total = count_configs(spec)
    if not 0 <= index < total:
        raise ContractError(f"config index {index} out of range for size {total}")
    n = spec.segment_count
    n_pos = len(spec.positions)
    n_intro = len(spec.introductions)
    for voc in spec.vocabularies:
        base = len(voc.labels)
        block = len(spec.brackets) * n_pos * n_intro * base**n
        if index >= block:
            index -= block
            continue
        per_bracket = n_pos * n_intro * base**n
        bracket, index = spec.brackets[index // per_bracket], index % per_bracket
        per_position = n_intro * base**n
        position, index = spec.positions[index // per_position], index % per_position
        introduction, flat = spec.introductions[index // base**n], index % base**n
        index_of = _digit_to_scheme_index(voc)
        return AnnotationConfig(
            scheme=_scheme(voc, bracket, position, introduction),
            assignment=LabelAssignment(
                indices=tuple(index_of[d] for d in _digits(flat, base, n))
            ),
        )
    raise AssertionError("unreachable")  # guarded by the range check above


def build_config(
    spec: SpaceSpec,
    *,
    type_index: int,
    bracket_index: int,
    position_index: int,
    introduction_index: int,
    digits: tuple[int, ...],
) -> AnnotationConfig:
    """Assemble the grid point at the given per-dimension indices."""
    voc = spec.vocabularies[type_index]
    if len(digits) != spec.segment_count:
        raise ContractError("one digit per segment required")
    if any(not 0 <= d < len(voc.labels) for d in digits):
        raise ContractError("digit out of range for the vocabulary")
    index_of = _digit_to_scheme_index(voc)
    return AnnotationConfig(
        scheme=_scheme(
            voc,
            spec.brackets[bracket_index],
            spec.positions[position_index],
            spec.introductions[introduction_index],
        ),
        assignment=LabelAssignment(indices=tuple(index_of[d] for d in digits)),
    )


def assignment_digits(spec: SpaceSpec, config: AnnotationConfig) -> tuple[int, ...] | None:
    """The config's assignment as digits of the spec's label grid.

    Returns None when the config's type or any of its label values lies
    outside the spec, i.e. the assignment is not a grid point.
    """
    voc = spec.vocabulary_for(config.scheme.annotation_type)
    if voc is None:
        return None
    digits = []
    for value in config.label_values:
        try:
            digits.append(voc.labels.index(value))
        except ValueError:
            return None
    return tuple(digits)


def rendered_segment(seg: str, scheme: AnnotationScheme, index: int) -> str:
    """One segment as it appears in a rendering under the given label index."""
    label = scheme.labels[index]
    if label == "":
        return seg
    if scheme.position == Position.PREFIX:
        return f"{wrap_label(label, scheme.bracket)} {seg}"
    body = seg.rstrip()
    return f"{body} {wrap_label(label, scheme.bracket)}{seg[len(body):]}"


def render(segmentation: Segmentation, config: AnnotationConfig) -> AnnotatedPrompt:
    """Produce the annotated prompt text for a segmentation and config.

    Neutral labels emit their segment verbatim. Prefix mode puts the
    wrapped label plus one space before the segment; suffix mode inserts
    one space plus the wrapped label between the segment's content and its
    trailing whitespace. The with-instruction condition prepends the
    scheme's instruction text and a blank line. The all-neutral,
    no-instruction config reproduces the original text byte-exactly.
    """
    segments = segmentation.segments
    indices = config.assignment.indices
    if len(indices) != len(segments):
        raise ContractError(
            f"assignment covers {len(indices)} segments, segmentation has {len(segments)}"
        )
    scheme = config.scheme
    text = "".join(
        rendered_segment(seg, scheme, idx) for seg, idx in zip(segments, indices)
    )
    if scheme.introduction == Introduction.WITH_INSTRUCTION:
        text = scheme.instruction_text + INSTRUCTION_SEPARATOR + text
    return AnnotatedPrompt(text=text, segmentation=segmentation, config=config)


def strip_annotations(rendered: AnnotatedPrompt) -> str:
    """Invert a rendering back to the original prompt text, byte-exactly.

    Walks the rendered text segment by segment, checking that each segment
    appears verbatim with only the expected instruction prefix, wrapped
    label and inserted spacing around it; raises ContractError if the
    rendering does not have that shape.
    """
    scheme = rendered.config.scheme
    text = rendered.text
    if scheme.introduction == Introduction.WITH_INSTRUCTION:
        head = scheme.instruction_text + INSTRUCTION_SEPARATOR
        if not text.startswith(head):
            raise ContractError("rendering lacks its instruction prefix")
        text = text[len(head):]
    pos = 0
    for seg, idx in zip(rendered.segmentation.segments, rendered.config.assignment.indices):
        expected = rendered_segment(seg, scheme, idx)
        if not text.startswith(expected, pos):
            raise ContractError(f"segment {seg!r} was altered by rendering")
        pos += len(expected)
    if pos != len(text):
        raise ContractError("rendering has trailing content beyond its segments")
    return "".join(rendered.segmentation.segments)


def coverage(searched: int, total: int) -> float:
    """Percentage of an assignment space that was searched, to 2 decimals.

    Rounds half-up, e.g. 5 of 27 -> 18.52.
    """
    if total <= 0:
        raise ContractError("total must be positive")
    if not 0 <= searched <= total:
        raise ContractError("need 0 <= searched <= total")
    pct = Decimal(searched) * 100 / Decimal(total)
    return float(pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def default_space(
    segment_count: int,
    *,
    types: tuple[str, ...] = presets.DEFAULT_TYPE_ORDER,
    brackets: tuple[Bracket, ...] = DEFAULT_BRACKETS,
    positions: tuple[Position, ...] = (Position.PREFIX, Position.SUFFIX),
    introductions: tuple[Introduction, ...] = (
        Introduction.WITH_INSTRUCTION,
        Introduction.WITHOUT_INSTRUCTION,
    ),
    include_neutral: bool = False,
) -> SpaceSpec:
    """The default grid: built-in types, three levels each, three brackets.

    With three segments this space has 4 x 3 x 2 x 2 x 27 = 1296
    configurations. Pass ``include_neutral=True`` to add the neutral label
    to every vocabulary, putting the unannotated prompt inside the grid.
    """
    vocabularies = []
    for name in types:
        levels = presets.DEFAULT_LABELS.get(name)
        if levels is None:
            raise ContractError(f"no default labels for type {name!r}")
        labels = ("",) + levels if include_neutral else levels
        vocabularies.append(
            Vocabulary(
                annotation_type=name,
                labels=labels,
                instruction=presets.annotation_instruction(name),
            )
        )
    return SpaceSpec(
        vocabularies=tuple(vocabularies),
        brackets=brackets,
        positions=positions,
        introductions=introductions,
        segment_count=segment_count,
    )


def full_space(segment_count: int, **kwargs) -> SpaceSpec:
    """The default grid with all four bracket variants."""
    return default_space(
        segment_count,
        brackets=(Bracket.SQUARE, Bracket.ANGLE, Bracket.CURLY, Bracket.ROUND),
        **kwargs,
    )


_INTRO_ALIASES = {
    "with": Introduction.WITH_INSTRUCTION,
    "with_instruction": Introduction.WITH_INSTRUCTION,
    "without": Introduction.WITHOUT_INSTRUCTION,
    "without_instruction": Introduction.WITHOUT_INSTRUCTION,
}


def space_from_dict(data: dict, segment_count: int) -> SpaceSpec:
    """Build a SpaceSpec from a JSON-style mapping.

    Expected keys: ``annotation_types`` (list of {name, labels, instruction?}
    or bare type names resolved against the built-in defaults), and
    optional ``brackets``, ``positions``, ``introductions``.
    """
    vocabularies = []
    for entry in data.get("annotation_types", list(presets.DEFAULT_TYPE_ORDER)):
        if isinstance(entry, str):
            vocabularies.append(
                Vocabulary(
                    annotation_type=entry,
                    labels=presets.DEFAULT_LABELS[entry],
                    instruction=presets.annotation_instruction(entry),
                )
            )
        else:
            name = entry["name"]
            instruction = entry.get("instruction")
            if instruction is None:
                try:
                    instruction = presets.annotation_instruction(name)
                except ContractError:
                    instruction = ""
            vocabularies.append(
                Vocabulary(
                    annotation_type=name,
                    labels=tuple(entry["labels"]),
                    instruction=instruction,
                )
            )
    brackets = tuple(Bracket(b) for b in data.get("brackets", [b.value for b in DEFAULT_BRACKETS]))
    positions = tuple(Position(p) for p in data.get("positions", ["prefix", "suffix"]))
    introductions = tuple(
        _INTRO_ALIASES[i] for i in data.get("introductions", ["with", "without"])
    )
    return SpaceSpec(
        vocabularies=tuple(vocabularies),
        brackets=brackets,
        positions=positions,
        introductions=introductions,
        segment_count=segment_count,
    )


def space_to_dict(spec: SpaceSpec) -> dict:
    return {
        "annotation_types": [
            {
                "name": v.annotation_type,
                "labels": list(v.labels),
                "instruction": v.instruction,
            }
            for v in spec.vocabularies
        ],
        "brackets": [b.value for b in spec.brackets],
        "positions": [p.value for p in spec.positions],
        "introductions": [i.value for i in spec.introductions],
        "segment_count": spec.segment_count,
    }
