"""Model backends and the task objective.

Backends implement one method, ``complete(request) -> response``. Two are
provided: a deterministic planted oracle for desk-scale verification of
the search machinery, and a generic HTTP chat-completion client with
retry/backoff. The objective evaluates a rendered prompt over repeated
seeds and reports mean correctness plus answer self-consistency.
"""
from __future__ import annotations

import os
import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Protocol

import requests

from . import presets
from .errors import ContractError, ObjectiveError, ProtocolError, TransportError
from .model import (
    AnnotatedPrompt,
    AnnotationScheme,
    AnswerKind,
    Introduction,
    LabelAssignment,
    ObjectiveResult,
    Position,
    Prompt,
    Segmentation,
    exact_result,
)
from .segmenter import CLEAR_TOKEN
from .space import INSTRUCTION_SEPARATOR, rendered_segment


@dataclass(frozen=True)
class ModelRequest:
    system_prompt: str | None
    user_text: str
    temperature: float
    seed: int
    model_name: str = ""

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ContractError("user_text must be non-empty")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    latency_ms: int
    backend_id: str
    attempts: int = 1


@dataclass(frozen=True)
class TaskSpec:
    """How to evaluate one task: answer kind, repeats, optional system prompt."""

    dataset: str
    answer_kind: AnswerKind
    system_prompt_preset: str | None = None
    seeds: int = 10
    temperature: float = 0.7

    def __post_init__(self) -> None:
        if self.seeds < 1:
            raise ContractError("seeds must be >= 1")


class ModelBackend(Protocol):
    backend_id: str

    def complete(self, request: ModelRequest) -> ModelResponse: ...


#: Signature of the objective consumed by the search driver.
ObjectiveFn = Callable[[AnnotatedPrompt], ObjectiveResult]


# ---------------------------------------------------------------------------
# Answer extraction and scoring
# ---------------------------------------------------------------------------

_NUM_RE = re.compile(r"(?<!\d)-?\d[\d,]*(?:\.\d+)?")
_MC_MARKER_RE = re.compile(
    r"answer\s*(?:is|:)\s*\(?\s*([A-Ea-e])(?![A-Za-z])", re.IGNORECASE
)
_MC_STANDALONE_RE = re.compile(r"(?<![A-Za-z])\(?([A-Ea-e])\)?(?![A-Za-z])")
_BOOL_RE = re.compile(r"\b(true|false|yes|no)\b", re.IGNORECASE)
_BOOL_MAP = {"true": "true", "yes": "true", "false": "false", "no": "false"}


def extract_answer(text: str, kind: AnswerKind) -> str | None:
    """Pull a normalised answer out of free-form model text.

    Rules are fixed: numeric answers take the last number (commas
    stripped); multiple choice takes the letter after the last
    "answer is"/"answer:" marker, else the last standalone A-E; boolean
    takes the last true/false/yes/no; free text is the trimmed response.
    Returns None when no candidate is found. Never raises.
    """
    if kind == AnswerKind.NUMERIC:
        matches = _NUM_RE.findall(text)
        return matches[-1].replace(",", "") if matches else None
    if kind == AnswerKind.MULTIPLE_CHOICE:
        marked = _MC_MARKER_RE.findall(text)
        if marked:
            return marked[-1].upper()
        bare = _MC_STANDALONE_RE.findall(text)
        return bare[-1].upper() if bare else None
    if kind == AnswerKind.BOOLEAN:
        found = _BOOL_RE.findall(text)
        return _BOOL_MAP[found[-1].lower()] if found else None
    stripped = text.strip()
    return stripped or None


def answer_key(answer: str | None, kind: AnswerKind) -> object:
    """Equivalence-class key for self-consistency grouping."""
    if answer is None:
        return None
    if kind == AnswerKind.NUMERIC:
        try:
            return Fraction(answer)
        except (ValueError, ZeroDivisionError):
            return answer
    if kind == AnswerKind.FREE_TEXT:
        return answer.strip().lower()
    return answer.upper() if kind == AnswerKind.MULTIPLE_CHOICE else answer.lower()


def score(answer: str | None, gold: str, kind: AnswerKind) -> bool:
    """Compare a normalised answer against the gold answer."""
    if kind != AnswerKind.FREE_TEXT and not gold:
        raise ContractError("gold answer must be non-empty for this kind")
    if answer is None:
        return False
    if kind == AnswerKind.NUMERIC:
        try:
            return Fraction(answer.replace(",", "")) == Fraction(gold.replace(",", ""))
        except (ValueError, ZeroDivisionError):
            return answer.strip().lower() == gold.strip().lower()
    if kind == AnswerKind.MULTIPLE_CHOICE:
        return answer.strip().upper() == gold.strip().strip("()").strip().upper()
    if kind == AnswerKind.BOOLEAN:
        return _BOOL_MAP.get(answer.strip().lower()) == _BOOL_MAP.get(
            gold.strip().lower()
        )
    return answer.strip().lower() == gold.strip().lower()


# ---------------------------------------------------------------------------
# Planted oracle
# ---------------------------------------------------------------------------

ORACLE_CORRECT = "CORRECT"
ORACLE_WRONG = "WRONG"


@dataclass(frozen=True)
class OracleWeights:
    """Relative weight of each dimension in the planted oracle's score.

    Use integers to keep the induced scores exact rationals. The default
    scores the assignment alone and ignores the categorical dimensions.
    """

    assignment: int = 1
    annotation_type: int = 0
    bracket: int = 0
    position: int = 0
    introduction: int = 0

    def total(self) -> int:
        return (
            self.assignment
            + self.annotation_type
            + self.bracket
            + self.position
            + self.introduction
        )


class PlantedOracle:
    """Deterministic objective with a known optimal assignment.

    The induced score for a candidate assignment ``c`` is
    ``1 - hamming(c, target) / n``. With non-default weights the score also
    rewards matching the target config's categorical dimensions. The
    object is callable as an ObjectiveFn, and doubles as a ModelBackend
    when constructed with the segmentation it will be rendered against:
    the backend replies CORRECT or WRONG per seed so that mean accuracy
    over ``n`` seeds (or a multiple) reproduces the exact score.
    """

    def __init__(
        self,
        target: LabelAssignment,
        *,
        weights: OracleWeights | None = None,
        target_scheme: AnnotationScheme | None = None,
        segmentation: Segmentation | None = None,
        parse_scheme: AnnotationScheme | None = None,
    ) -> None:
        self.target = target
        self.weights = weights or OracleWeights()
        if self.weights.total() <= 0:
            raise ContractError("oracle weights must sum to a positive value")
        if self.weights != OracleWeights(assignment=self.weights.assignment):
            if target_scheme is None:
                raise ContractError("categorical weights need a target_scheme")
        self.target_scheme = target_scheme
        self.segmentation = segmentation
        self.parse_scheme = parse_scheme or target_scheme
        self.backend_id = "planted-oracle"

    def __call__(self, rendered: AnnotatedPrompt) -> ObjectiveResult:
        return self.objective(rendered)

    def score_fraction(self, rendered: AnnotatedPrompt) -> Fraction:
        config = rendered.config
        n = len(self.target.indices)
        if len(config.assignment.indices) != n:
            raise ContractError("candidate assignment length differs from target")
        hamming = sum(
            1 for a, b in zip(config.assignment.indices, self.target.indices) if a != b
        )
        w = self.weights
        acc = Fraction(w.assignment) * Fraction(n - hamming, n)
        if self.target_scheme is not None:
            scheme = config.scheme
            acc += w.annotation_type * int(
                scheme.annotation_type == self.target_scheme.annotation_type
            )
            acc += w.bracket * int(scheme.bracket == self.target_scheme.bracket)
            acc += w.position * int(scheme.position == self.target_scheme.position)
            acc += w.introduction * int(
                scheme.introduction == self.target_scheme.introduction
            )
        return acc / w.total()

    def objective(self, rendered: AnnotatedPrompt) -> ObjectiveResult:
        value = self.score_fraction(rendered)
        return exact_result(value.numerator, value.denominator)

    # -- ModelBackend facet --------------------------------------------------

    @property
    def gold(self) -> str:
        """Gold answer matching the backend facet's replies."""
        return ORACLE_CORRECT

    @property
    def answer_kind(self) -> AnswerKind:
        return AnswerKind.FREE_TEXT

    def complete(self, request: ModelRequest) -> ModelResponse:
        if self.segmentation is None or self.parse_scheme is None:
            raise ContractError(
                "backend facet needs segmentation and a scheme to parse against"
            )
        recovered = self._recover_indices(request.user_text)
        n = len(self.target.indices)
        if recovered is None:
            hamming = n
        else:
            hamming = sum(
                1 for a, b in zip(recovered, self.target.indices) if a != b
            )
        text = ORACLE_CORRECT if request.seed % n >= hamming else ORACLE_WRONG
        return ModelResponse(text=text, latency_ms=0, backend_id=self.backend_id)

    def _recover_indices(self, text: str) -> tuple[int, ...] | None:
        """Parse the per-segment label indices back out of rendered text."""
        scheme = self.parse_scheme
        if scheme.instruction_text and text.startswith(
            scheme.instruction_text + INSTRUCTION_SEPARATOR
        ):
            text = text[len(scheme.instruction_text + INSTRUCTION_SEPARATOR):]
        pos = 0
        indices = []
        for seg in self.segmentation.segments:
            found = None
            for idx in range(len(scheme.labels) - 1, 0, -1):
                candidate = rendered_segment(seg, scheme, idx)
                if text.startswith(candidate, pos):
                    found = (idx, len(candidate))
                    break
            if found is None and text.startswith(seg, pos):
                found = (0, len(seg))
            if found is None:
                return None
            indices.append(found[0])
            pos += found[1]
        return tuple(indices) if pos == len(text) else None


def planted_oracle_backend(
    target: LabelAssignment,
    segmentation: Segmentation,
    scheme: AnnotationScheme,
    **kwargs,
) -> PlantedOracle:
    """A PlantedOracle wired to act as a ModelBackend for the given rendering.

    Score it with ``kind=FREE_TEXT`` against ``oracle.gold``.
    """
    return PlantedOracle(
        target, segmentation=segmentation, parse_scheme=scheme, **kwargs
    )


# ---------------------------------------------------------------------------
# HTTP chat backend
# ---------------------------------------------------------------------------

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

DEFAULT_REQUEST_TEMPLATE: dict = {
    "model": "{model_name}",
    "temperature": "{temperature}",
    "seed": "{seed}",
    "messages": [
        {"role": "system", "content": "{system}"},
        {"role": "user", "content": "{user}"},
    ],
}

DEFAULT_RESPONSE_PATH = "choices.0.message.content"

_DROP = object()

_TYPED_PLACEHOLDERS = ("{system}", "{user}", "{model_name}", "{seed}", "{temperature}")


def _fill_template(node: Any, values: dict[str, Any]) -> Any:
    if isinstance(node, dict):
        filled = {}
        for key, val in node.items():
            out = _fill_template(val, values)
            if out is _DROP:
                return _DROP
            filled[key] = out
        return filled
    if isinstance(node, list):
        items = []
        for val in node:
            out = _fill_template(val, values)
            if out is not _DROP:
                items.append(out)
        return items
    if isinstance(node, str):
        if node in _TYPED_PLACEHOLDERS:
            value = values[node[1:-1]]
            return _DROP if value is None else value
        out = node
        for name, value in values.items():
            out = out.replace("{" + name + "}", "" if value is None else str(value))
        return out
    return node


def _dig(payload: Any, path: str) -> str:
    node = payload
    for part in path.split("."):
        try:
            node = node[int(part)] if part.lstrip("-").isdigit() else node[part]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(
                f"response path {path!r} not found in backend reply"
            ) from exc
    if not isinstance(node, str):
        raise ProtocolError(f"response path {path!r} did not resolve to text")
    return node


class HttpChatBackend:
    """Generic chat-completion client over HTTP POST with retry/backoff.

    Transient failures (connection errors, 429, 5xx) are retried with
    exponential backoff: base 1s doubling per attempt, at most 5 attempts.
    Credentials come from the environment variable named by ``auth_env``
    and are sent as a bearer token; they are never logged.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        *,
        auth_env: str | None = None,
        request_template: dict | None = None,
        response_path: str = DEFAULT_RESPONSE_PATH,
        temperature: float = 0.7,
        timeout: float = 60.0,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        backoff_factor: float = 2.0,
        session=None,
        sleep: Callable[[float], None] | None = None,
    ) -> None:
        if not endpoint:
            raise ContractError("endpoint must be non-empty")
        self.endpoint = endpoint
        self.model_name = model_name
        self.auth_env = auth_env
        self.request_template = request_template or DEFAULT_REQUEST_TEMPLATE
        self.response_path = response_path
        self.temperature = temperature
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self._session = session if session is not None else requests.Session()
        self._sleep = sleep if sleep is not None else time.sleep
        self.backend_id = model_name or endpoint

    @classmethod
    def from_config(cls, config: dict, **overrides) -> "HttpChatBackend":
        kwargs = {
            "endpoint": config["endpoint"],
            "model_name": config.get("model_name", ""),
            "auth_env": config.get("auth_env"),
            "request_template": config.get("request_template"),
            "response_path": config.get("response_path", DEFAULT_RESPONSE_PATH),
            "temperature": config.get("temperature", 0.7),
        }
        kwargs.update(overrides)
        return cls(**kwargs)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise TransportError(
                    f"credentials variable {self.auth_env} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, request: ModelRequest) -> ModelResponse:
        body = _fill_template(
            self.request_template,
            {
                "system": request.system_prompt,
                "user": request.user_text,
                "model_name": request.model_name or self.model_name,
                "seed": request.seed,
                "temperature": request.temperature,
            },
        )
        headers = self._headers()
        started = time.perf_counter()
        last_failure = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._session.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_failure = f"transport: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        payload = resp.json()
                    except ValueError as exc:
                        raise ProtocolError("backend reply is not JSON") from exc
                    text = _dig(payload, self.response_path)
                    latency = int((time.perf_counter() - started) * 1000)
                    return ModelResponse(
                        text=text,
                        latency_ms=latency,
                        backend_id=self.backend_id,
                        attempts=attempt,
                    )
                if resp.status_code not in RETRYABLE_STATUS:
                    raise TransportError(
                        f"HTTP {resp.status_code}: {resp.text[:200]}"
                    )
                last_failure = f"HTTP {resp.status_code}"
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base * self.backoff_factor ** (attempt - 1))
        raise TransportError(
            f"gave up after {self.max_attempts} attempts ({last_failure})"
        )


def http_chat_backend(
    endpoint: str, auth: str | None, request_template: dict | None = None, **kwargs
) -> HttpChatBackend:
    return HttpChatBackend(
        endpoint,
        kwargs.pop("model_name", ""),
        auth_env=auth,
        request_template=request_template,
        **kwargs,
    )


# ---------------------------------------------------------------------------
# Objective evaluation
# ---------------------------------------------------------------------------


def evaluate_objective(
    task: TaskSpec,
    backend: ModelBackend,
    rendered: AnnotatedPrompt,
    gold: str,
    *,
    parallelism: int = 1,
) -> ObjectiveResult:
    """Score a rendered prompt: mean correctness over seeds 0..seeds-1.

    Seeds whose backend call fails are marked failed and scored incorrect;
    if more than half fail the whole evaluation raises ObjectiveError.
    Self-consistency is the largest fraction of seeds agreeing on one
    extracted answer.
    """
    system = (
        presets.system_prompt(task.system_prompt_preset)
        if task.system_prompt_preset
        else None
    )

    def run_seed(seed: int) -> tuple[bool, object, bool]:
        request = ModelRequest(
            system_prompt=system,
            user_text=rendered.text,
            temperature=task.temperature,
            seed=seed,
        )
        try:
            response = backend.complete(request)
        except (TransportError, ProtocolError):
            return False, None, True
        answer = extract_answer(response.text, task.answer_kind)
        return score(answer, gold, task.answer_kind), answer_key(answer, task.answer_kind), False

    seeds = range(task.seeds)
    if parallelism > 1 and task.seeds > 1:
        with ThreadPoolExecutor(max_workers=min(parallelism, task.seeds)) as pool:
            outcomes = list(pool.map(run_seed, seeds))
    else:
        outcomes = [run_seed(s) for s in seeds]

    failed = tuple(s for s, (_, _, bad) in zip(seeds, outcomes) if bad)
    if len(failed) * 2 > task.seeds:
        raise ObjectiveError(
            f"{len(failed)} of {task.seeds} seed evaluations failed"
        )
    per_seed = tuple(ok for ok, _, _ in outcomes)
    classes = Counter(key for _, key, _ in outcomes)
    return ObjectiveResult(
        score=sum(per_seed) / task.seeds,
        per_seed_correct=per_seed,
        self_consistency=max(classes.values()) / task.seeds,
        seeds=task.seeds,
        failed_seeds=failed,
    )


# ---------------------------------------------------------------------------
# One-shot model annotation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelAnnotation:
    """Result of asking a model to annotate a prompt in one pass."""

    text: str
    prompt: Prompt
    clear: bool
    accepted: bool
    raw_response: str


def strip_bracketed(text: str, opener: str = "[", closer: str = "]") -> str:
    """Remove every bracketed span, including nested ones."""
    out = []
    depth = 0
    for ch in text:
        if ch == opener:
            depth += 1
        elif ch == closer and depth > 0:
            depth -= 1
        elif depth == 0:
            out.append(ch)
    return "".join(out)


def _squash_ws(text: str) -> str:
    return " ".join(text.split())


def bracket_residue_matches(annotated: str, original: str) -> bool:
    """True when removing all [bracketed] spans recovers the original text,
    up to whitespace normalisation."""
    return _squash_ws(strip_bracketed(annotated)) == _squash_ws(original)


def annotate_with_model(
    prompt: Prompt,
    backend: ModelBackend,
    annotator_instruction: str,
) -> ModelAnnotation:
    """One backend call that inserts [bracketed] annotations into a prompt.

    A reply of exactly "[Clear]" keeps the prompt unchanged. Any other
    reply is accepted only if stripping its bracketed spans recovers the
    original text (whitespace-insensitively); otherwise the original
    prompt is returned with ``accepted=False``. Transport errors propagate.
    """
    response = backend.complete(
        ModelRequest(
            system_prompt=annotator_instruction,
            user_text=prompt.text,
            temperature=0.0,
            seed=0,
        )
    )
    raw = response.text
    if raw.strip() == CLEAR_TOKEN:
        return ModelAnnotation(
            text=prompt.text, prompt=prompt, clear=True, accepted=True, raw_response=raw
        )
    if bracket_residue_matches(raw, prompt.text):
        return ModelAnnotation(
            text=raw, prompt=prompt, clear=False, accepted=True, raw_response=raw
        )
    return ModelAnnotation(
        text=prompt.text, prompt=prompt, clear=False, accepted=False, raw_response=raw
    )
