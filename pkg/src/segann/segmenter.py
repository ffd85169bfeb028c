"""Segmenters: produce valid segmentations by rules or via a model backend.

Every segmenter in this module returns segmentations that pass
:func:`segann.model.validate`: segments are non-empty and concatenate
byte-exactly to the source text.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from .errors import InfeasibleError, PatternError
from .model import Prompt, Segmentation

if TYPE_CHECKING:  # pragma: no cover
    from .evaluation import ModelBackend


class Attach(str, Enum):
    """Which side of a boundary the matched delimiter text belongs to."""

    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class DelimiterSpec:
    """Boundary markers for rule-based splitting.

    Patterns are literal strings by default; set ``regex=True`` to treat
    them as regular expressions. Matched delimiter text attaches to the
    segment on the side given by ``keep_delimiter``.
    """

    patterns: tuple[str, ...]
    keep_delimiter: Attach = Attach.LEFT
    regex: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "patterns", tuple(self.patterns))

    def compiled(self) -> list[re.Pattern[str]]:
        if not self.patterns:
            raise PatternError("delimiter spec needs at least one pattern")
        out = []
        for pat in self.patterns:
            if pat == "":
                raise PatternError("empty delimiter pattern")
            try:
                out.append(re.compile(pat if self.regex else re.escape(pat)))
            except re.error as exc:
                raise PatternError(f"bad pattern {pat!r}: {exc}") from exc
        return out


#: Tokens that end with a period but do not end a sentence. Compared
#: case-insensitively against the whitespace-delimited token that precedes
#: a boundary candidate.
ABBREVIATIONS = frozenset({"e.g.", "i.e.", "mr.", "mrs.", "ms.", "dr."})

_SENTENCE_END = ".?!"


def find_boundaries(text: str, spec: DelimiterSpec) -> list[int]:
    """Interior split offsets for the delimiter spec, sorted ascending.

    Offsets are character indices; 0 and len(text) are implied and never
    returned. Text with no pattern occurrences yields an empty list.
    """
    if not text:
        raise PatternError("text must be non-empty")
    offsets: set[int] = set()
    for pattern in spec.compiled():
        for match in pattern.finditer(text):
            off = match.end() if spec.keep_delimiter == Attach.LEFT else match.start()
            if 0 < off < len(text):
                offsets.add(off)
    return sorted(offsets)


def chop(text: str, boundaries: list[int], prompt_id: str = "") -> Segmentation:
    """Cut text at the given interior offsets into exact substrings.

    Duplicate or out-of-range offsets are coalesced/dropped so the result
    never contains an empty segment; degenerate input yields one segment.
    """
    interior = sorted({b for b in boundaries if 0 < b < len(text)})
    cuts = [0, *interior, len(text)]
    segments = tuple(text[a:b] for a, b in zip(cuts, cuts[1:]))
    return Segmentation(prompt_id=prompt_id, segments=segments)


def _token_before(text: str, index: int) -> str:
    """The maximal non-whitespace run ending at text[index], inclusive."""
    start = index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start : index + 1]


def sentence_boundaries(text: str) -> list[int]:
    """Interior offsets after sentence-final punctuation.

    A '.', '?' or '!' followed by whitespace ends a sentence unless the
    token it closes is a known abbreviation. Trailing whitespace attaches
    to the preceding sentence, so each offset sits at the start of the
    next sentence. Decimal numbers never split because the '.' inside them
    is not followed by whitespace.
    """
    offsets = []
    n = len(text)
    for i, ch in enumerate(text):
        if ch not in _SENTENCE_END:
            continue
        if i + 1 < n and not text[i + 1].isspace():
            continue
        if ch == "." and _token_before(text, i).lower() in ABBREVIATIONS:
            continue
        j = i + 1
        while j < n and text[j].isspace():
            j += 1
        if 0 < j < n:
            offsets.append(j)
    return offsets


def segment_sentences(prompt: Prompt) -> Segmentation:
    """Split a prompt into sentences with a rule-based boundary detector."""
    return chop(prompt.text, sentence_boundaries(prompt.text), prompt.id)


def _balanced_grouping(lengths: list[int], k: int) -> list[int]:
    """Sizes of k contiguous groups minimising the maximum group length sum.

    Classic linear-partition dynamic programme; ties broken towards the
    earliest feasible split so results are deterministic.
    """
    n = len(lengths)
    prefix = [0]
    for length in lengths:
        prefix.append(prefix[-1] + length)

    def span(a: int, b: int) -> int:
        return prefix[b] - prefix[a]

    # best[g][i]: minimal max-group-sum partitioning the first i items into g groups
    best = [[None] * (n + 1) for _ in range(k + 1)]
    split = [[0] * (n + 1) for _ in range(k + 1)]
    for i in range(1, n + 1):
        best[1][i] = span(0, i)
    for g in range(2, k + 1):
        for i in range(g, n + 1):
            for j in range(g - 1, i):
                cand = max(best[g - 1][j], span(j, i))
                if best[g][i] is None or cand < best[g][i]:
                    best[g][i] = cand
                    split[g][i] = j
    sizes = []
    i = n
    for g in range(k, 1, -1):
        j = split[g][i]
        sizes.append(i - j)
        i = j
    sizes.append(i)
    sizes.reverse()
    return sizes


def segment_fixed_k(prompt: Prompt, k: int) -> Segmentation:
    """Group the prompt's sentences into exactly k contiguous segments.

    Groups are chosen to minimise the longest group's character length
    (sizes differ by at most one sentence when sentences are uniform).
    Raises InfeasibleError when the prompt has fewer sentences than k.
    """
    if k < 1:
        raise InfeasibleError("k must be >= 1")
    sentences = segment_sentences(prompt).segments
    if len(sentences) < k:
        raise InfeasibleError(
            f"prompt has {len(sentences)} sentences, cannot make {k} segments"
        )
    sizes = _balanced_grouping([len(s) for s in sentences], k)
    segments = []
    pos = 0
    for size in sizes:
        segments.append("".join(sentences[pos : pos + size]))
        pos += size
    return Segmentation(prompt_id=prompt.id, segments=tuple(segments))


def refine(segmentation: Segmentation, inner_spec: DelimiterSpec) -> Segmentation:
    """Split each segment further on the inner delimiter spec.

    The output is a refinement: each input segment equals the concatenation
    of a contiguous run of output segments. Segments without inner matches
    pass through unchanged, and refining twice with the same spec is a
    no-op the second time.
    """
    pieces: list[str] = []
    for seg in segmentation.segments:
        pieces.extend(chop(seg, find_boundaries(seg, inner_spec)).segments)
    return Segmentation(prompt_id=segmentation.prompt_id, segments=tuple(pieces))


#: Exact reply a segmentation model may give to signal the prompt needs no
#: splitting at all.
CLEAR_TOKEN = "[Clear]"

DEFAULT_SENTINEL = "<<<SEG>>>"

SEGMENT_INSTRUCTION_TEMPLATE = (
    "Split the user's text into meaningful segments. Reply with the text "
    "reproduced exactly, inserting the marker {sentinel} between segments. "
    "Do not add, remove or reorder any other characters. If the text is "
    'already clear and needs no splitting, reply with exactly "[Clear]".'
)


def segment_instruction(sentinel: str = DEFAULT_SENTINEL) -> str:
    """Default system prompt for model-based segmentation."""
    return SEGMENT_INSTRUCTION_TEMPLATE.format(sentinel=sentinel)


@dataclass(frozen=True)
class ModelSegmentation:
    """A model-produced segmentation plus how it was obtained."""

    segmentation: Segmentation
    used_fallback: bool
    clear: bool
    raw_response: str


def segment_with_model(
    prompt: Prompt,
    backend: "ModelBackend",
    instruction: str,
    sentinel: str = DEFAULT_SENTINEL,
) -> ModelSegmentation:
    """Ask a model backend to place segment boundaries.

    The backend is expected to return the prompt text with ``sentinel``
    inserted at boundaries, or exactly ``[Clear]`` to keep the prompt
    whole. Any response that does not reconstruct the original text falls
    back to the rule-based sentence splitter with ``used_fallback`` set.
    Transport errors propagate to the caller.
    """
    from .evaluation import ModelRequest

    response = backend.complete(
        ModelRequest(
            system_prompt=instruction,
            user_text=prompt.text,
            temperature=0.0,
            seed=0,
        )
    )
    raw = response.text
    if raw.strip() == CLEAR_TOKEN:
        single = Segmentation(prompt_id=prompt.id, segments=(prompt.text,))
        return ModelSegmentation(single, used_fallback=False, clear=True, raw_response=raw)

    parts = [p for p in raw.split(sentinel) if p != ""]
    if parts and "".join(parts) == prompt.text:
        seg = Segmentation(prompt_id=prompt.id, segments=tuple(parts))
        return ModelSegmentation(seg, used_fallback=False, clear=False, raw_response=raw)

    fallback = segment_sentences(prompt)
    return ModelSegmentation(fallback, used_fallback=True, clear=False, raw_response=raw)
