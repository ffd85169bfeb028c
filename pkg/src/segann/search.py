"""The optimisation driver: propose, evaluate, keep the best, repeat.

Trial zero is always the neutral (unannotated) configuration, whether or
not the chosen strategy would propose it, so the final result can never
score below the original prompt. Comparison is strict; ties keep the
earlier configuration. Rounds repeat the strategy re-centred on the
incumbent best until a round yields no improvement or the round limit is
reached.
"""
from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from typing import Iterator, Protocol

from .errors import ContractError, SearchError
from .evaluation import ObjectiveFn
from .model import (
    AnnotatedPrompt,
    AnnotationConfig,
    Introduction,
    ObjectiveResult,
    Prompt,
    Segmentation,
    neutral_config,
    validate,
)
from .space import (
    SpaceSpec,
    assignment_digits,
    build_config,
    config_at,
    count_assignments,
    count_configs,
    coverage,
    enumerate_configs,
    render,
)


@dataclass(frozen=True)
class SearchBudget:
    """Trial allowance: up to trials_per_round evaluations per round."""

    trials_per_round: int
    max_rounds: int = 1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.trials_per_round < 0:
            raise ContractError("trials_per_round must be >= 0")
        if self.max_rounds < 1:
            raise ContractError("max_rounds must be >= 1")


@dataclass(frozen=True)
class TrialRecord:
    ordinal: int
    config: AnnotationConfig
    score: ObjectiveResult | None
    is_new_best: bool
    duration_ms: int = 0
    error: str | None = None


@dataclass(frozen=True)
class SearchResult:
    best_config: AnnotationConfig
    best_rendered: AnnotatedPrompt
    best_score: ObjectiveResult
    trials: tuple[TrialRecord, ...]
    rounds_executed: int
    converged: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", tuple(self.trials))


class Strategy(Protocol):
    """Sequential proposal source; may adapt to observed scores."""

    def start_round(self, best: AnnotationConfig | None) -> None: ...

    def propose(self) -> AnnotationConfig | None: ...

    def observe(self, config: AnnotationConfig, score: float) -> None: ...


class ExhaustiveStrategy:
    """Propose every configuration exactly once, in enumeration order."""

    def __init__(self, spec: SpaceSpec) -> None:
        self._stream: Iterator[AnnotationConfig] = enumerate_configs(spec)

    def start_round(self, best: AnnotationConfig | None) -> None:
        pass  # enumeration continues where it left off

    def propose(self) -> AnnotationConfig | None:
        return next(self._stream, None)

    def observe(self, config: AnnotationConfig, score: float) -> None:
        pass


def exhaustive_strategy(spec: SpaceSpec) -> ExhaustiveStrategy:
    return ExhaustiveStrategy(spec)


class RandomStrategy:
    """Uniform sampling without replacement over the whole grid.

    The proposal stream is a fixed seeded permutation consumed lazily, so
    the first b proposals are identical for every budget >= b.
    """

    def __init__(self, spec: SpaceSpec, seed: int) -> None:
        self._spec = spec
        self._total = count_configs(spec)
        self._rng = random.Random(seed)
        self._drawn: set[int] = set()

    def start_round(self, best: AnnotationConfig | None) -> None:
        pass

    def propose(self) -> AnnotationConfig | None:
        if len(self._drawn) >= self._total:
            return None
        while True:
            index = self._rng.randrange(self._total)
            if index not in self._drawn:
                self._drawn.add(index)
                return config_at(self._spec, index)

    def observe(self, config: AnnotationConfig, score: float) -> None:
        pass


def random_strategy(spec: SpaceSpec, seed: int) -> RandomStrategy:
    return RandomStrategy(spec, seed)


@dataclass
class _Point:
    """Greedy search position: one index per dimension plus label digits."""

    type_index: int
    bracket_index: int
    position_index: int
    introduction_index: int
    digits: tuple[int, ...]


class GreedyCoordinateAscentStrategy:
    """Coordinate ascent over segments, then the categorical dimensions.

    Starting from the neutral point (or the grid's first labels when the
    vocabulary has no neutral), each sweep tries every alternative value
    at one position at a time and adopts the best strict improvement.
    Sweeping stops when a full pass yields no improvement. The seed is
    accepted for interface symmetry with the random strategy; the sweep
    itself is deterministic.
    """

    def __init__(self, spec: SpaceSpec, seed: int = 0) -> None:
        self._spec = spec
        self._seed = seed
        n = spec.segment_count
        intro_index = (
            spec.introductions.index(Introduction.WITHOUT_INSTRUCTION)
            if Introduction.WITHOUT_INSTRUCTION in spec.introductions
            else 0
        )
        self._current = _Point(
            type_index=0,
            bracket_index=0,
            position_index=0,
            introduction_index=intro_index,
            digits=(0,) * n,
        )
        self._current_score = float("-inf")
        self._phases: list[tuple[str, int]] = [("label", i) for i in range(n)] + [
            ("type", -1),
            ("bracket", -1),
            ("position", -1),
            ("introduction", -1),
        ]
        self._phase = -1  # -1: establish the start point's own score
        self._queue: list[tuple[_Point, AnnotationConfig]] = []
        self._batch: dict[AnnotationConfig, tuple[_Point, float | None]] = {}
        self._proposed: set[AnnotationConfig] = set()
        self._improved = False
        self._done = False
        self._queue_start()

    # -- candidate generation -------------------------------------------------

    def _config(self, point: _Point) -> AnnotationConfig | None:
        voc = self._spec.vocabularies[point.type_index]
        if any(d >= len(voc.labels) for d in point.digits):
            return None
        return build_config(
            self._spec,
            type_index=point.type_index,
            bracket_index=point.bracket_index,
            position_index=point.position_index,
            introduction_index=point.introduction_index,
            digits=point.digits,
        )

    def _enqueue(self, point: _Point) -> None:
        config = self._config(point)
        if config is not None and config not in self._proposed:
            self._queue.append((point, config))

    def _queue_start(self) -> None:
        self._enqueue(self._current)

    def _queue_phase(self, phase: tuple[str, int]) -> None:
        kind, pos = phase
        cur = self._current
        if kind == "label":
            base = len(self._spec.vocabularies[cur.type_index].labels)
            for digit in range(base):
                if digit == cur.digits[pos]:
                    continue
                digits = cur.digits[:pos] + (digit,) + cur.digits[pos + 1:]
                self._enqueue(
                    _Point(cur.type_index, cur.bracket_index, cur.position_index,
                           cur.introduction_index, digits)
                )
        elif kind == "type":
            for ti in range(len(self._spec.vocabularies)):
                if ti != cur.type_index:
                    self._enqueue(
                        _Point(ti, cur.bracket_index, cur.position_index,
                               cur.introduction_index, cur.digits)
                    )
        elif kind == "bracket":
            for bi in range(len(self._spec.brackets)):
                if bi != cur.bracket_index:
                    self._enqueue(
                        _Point(cur.type_index, bi, cur.position_index,
                               cur.introduction_index, cur.digits)
                    )
        elif kind == "position":
            for pi in range(len(self._spec.positions)):
                if pi != cur.position_index:
                    self._enqueue(
                        _Point(cur.type_index, cur.bracket_index, pi,
                               cur.introduction_index, cur.digits)
                    )
        else:
            for ii in range(len(self._spec.introductions)):
                if ii != cur.introduction_index:
                    self._enqueue(
                        _Point(cur.type_index, cur.bracket_index, cur.position_index,
                               ii, cur.digits)
                    )

    # -- sweep control ---------------------------------------------------------

    def _finalize_batch(self) -> None:
        scored = [
            (score, point)
            for point, score in self._batch.values()
            if score is not None
        ]
        self._batch.clear()
        if not scored:
            return
        best_score, best_point = max(scored, key=lambda item: item[0])
        if self._phase == -1:
            # establish the start point's own score; not an improvement
            if best_score > self._current_score:
                self._current_score = best_score
                self._current = best_point
            return
        if best_score > self._current_score:
            self._current_score = best_score
            self._current = best_point
            self._improved = True

    def _advance(self) -> bool:
        """Move to the next phase with candidates; False when the sweep is over."""
        while True:
            self._finalize_batch()
            self._phase += 1
            if self._phase >= len(self._phases):
                if not self._improved:
                    return False
                self._improved = False
                self._phase = 0
            self._queue_phase(self._phases[self._phase])
            if self._queue:
                return True

    def start_round(self, best: AnnotationConfig | None) -> None:
        """Re-centre on the incumbent best and start a fresh sweep."""
        if best is not None:
            point = self._point_for(best)
            if point is not None:
                self._current = point
        self._phase = -1
        self._queue.clear()
        self._batch.clear()
        self._improved = False
        self._done = False
        self._queue_start()

    def _point_for(self, config: AnnotationConfig) -> _Point | None:
        digits = assignment_digits(self._spec, config)
        voc = self._spec.vocabulary_for(config.scheme.annotation_type)
        if digits is None or voc is None:
            return None
        scheme = config.scheme
        spec = self._spec
        if (
            scheme.bracket not in spec.brackets
            or scheme.position not in spec.positions
            or scheme.introduction not in spec.introductions
        ):
            return None
        return _Point(
            type_index=spec.vocabularies.index(voc),
            bracket_index=spec.brackets.index(scheme.bracket),
            position_index=spec.positions.index(scheme.position),
            introduction_index=spec.introductions.index(scheme.introduction),
            digits=digits,
        )

    def propose(self) -> AnnotationConfig | None:
        if self._done:
            return None
        if not self._queue:
            if not self._advance():
                self._done = True
                return None
        point, config = self._queue.pop(0)
        self._proposed.add(config)
        self._batch[config] = (point, None)
        return config

    def observe(self, config: AnnotationConfig, score: float) -> None:
        if config in self._batch:
            point, _ = self._batch[config]
            self._batch[config] = (point, score)
        elif self._phase == -1 and self._current_score == float("-inf"):
            # score of the pinned neutral trial grounds the start point
            self._current_score = score


def greedy_coordinate_ascent_strategy(
    spec: SpaceSpec, seed: int = 0
) -> GreedyCoordinateAscentStrategy:
    return GreedyCoordinateAscentStrategy(spec, seed)


def neutral_trial_config(spec: SpaceSpec, segmentation: Segmentation) -> AnnotationConfig:
    seed_config = build_config(
        spec,
        type_index=0,
        bracket_index=0,
        position_index=0,
        introduction_index=0,
        digits=(0,) * spec.segment_count,
    )
    return neutral_config(segmentation, seed_config.scheme)


def optimize(
    prompt: Prompt,
    segmentation: Segmentation,
    spec: SpaceSpec,
    strategy: Strategy,
    budget: SearchBudget,
    evaluator: ObjectiveFn,
) -> SearchResult:
    """Run the annotation search and return the best configuration found.

    Each round draws at most ``budget.trials_per_round`` fresh proposals
    from the strategy; proposals already evaluated are answered from the
    score cache without consuming budget. A round with no new best ends
    the run as converged. Evaluator failures mark the trial failed and the
    run continues; a run with no successful trial at all raises SearchError.
    """
    problem = validate(prompt, segmentation)
    if problem is not None:
        raise ContractError(f"invalid segmentation: {problem}")
    if spec.segment_count != len(segmentation.segments):
        raise ContractError(
            f"space is sized for {spec.segment_count} segments, "
            f"segmentation has {len(segmentation.segments)}"
        )

    trials: list[TrialRecord] = []
    cache: dict[AnnotationConfig, float | None] = {}
    best_trial: TrialRecord | None = None
    best_value = float("-inf")

    def run_trial(config: AnnotationConfig) -> None:
        nonlocal best_trial, best_value
        started = time.perf_counter()
        try:
            result = evaluator(render(segmentation, config))
        except Exception as exc:  # failed trials are skipped, not scored 0
            duration = int((time.perf_counter() - started) * 1000)
            trials.append(
                TrialRecord(
                    ordinal=len(trials),
                    config=config,
                    score=None,
                    is_new_best=False,
                    duration_ms=duration,
                    error=str(exc) or exc.__class__.__name__,
                )
            )
            cache[config] = None
            return
        duration = int((time.perf_counter() - started) * 1000)
        value = result.score
        is_new_best = value > best_value
        record = TrialRecord(
            ordinal=len(trials),
            config=config,
            score=result,
            is_new_best=is_new_best,
            duration_ms=duration,
        )
        trials.append(record)
        cache[config] = value
        if is_new_best:
            best_trial = record
            best_value = value
        strategy.observe(config, value)

    run_trial(neutral_trial_config(spec, segmentation))

    total = count_configs(spec)
    rounds_executed = 0
    converged = False
    for _ in range(budget.max_rounds):
        strategy.start_round(best_trial.config if best_trial else None)
        rounds_executed += 1
        best_before = best_value
        fresh = 0
        replays = 0
        while fresh < budget.trials_per_round:
            config = strategy.propose()
            if config is None:
                break
            if config in cache:
                known = cache[config]
                if known is not None:
                    strategy.observe(config, known)
                replays += 1
                if replays > total:
                    break  # defensive: strategy is cycling over known configs
                continue
            run_trial(config)
            fresh += 1
        if best_value <= best_before:
            converged = True
            break

    if best_trial is None:
        raise SearchError("every trial failed; no configuration was scored")

    return SearchResult(
        best_config=best_trial.config,
        best_rendered=render(segmentation, best_trial.config),
        best_score=best_trial.score,
        trials=tuple(trials),
        rounds_executed=rounds_executed,
        converged=converged,
    )


def coverage_report(result: SearchResult, spec: SpaceSpec) -> float:
    """Share of the spec's assignment grid touched by scored trials.

    Only assignments that are grid points count: the pinned neutral trial
    contributes only when the vocabulary itself lists the neutral label.
    """
    touched: set[tuple[int, ...]] = set()
    for trial in result.trials:
        if trial.score is None:
            continue
        digits = assignment_digits(spec, trial.config)
        if digits is not None:
            touched.add(digits)
    total = count_assignments(spec.segment_count, spec.labels_per_type())
    return coverage(len(touched), total)


# ---------------------------------------------------------------------------
# Trial log serialisation
# ---------------------------------------------------------------------------


def config_to_dict(config: AnnotationConfig) -> dict:
    scheme = config.scheme
    return {
        "annotation_type": scheme.annotation_type,
        "labels": list(scheme.labels),
        "bracket": scheme.bracket.value,
        "position": scheme.position.value,
        "introduction": scheme.introduction.value,
        "instruction_text": scheme.instruction_text,
        "assignment": list(config.assignment.indices),
    }


def trial_to_dict(trial: TrialRecord, *, stable_durations: bool = False) -> dict:
    return {
        "ordinal": trial.ordinal,
        "config": config_to_dict(trial.config),
        "score": trial.score.to_dict() if trial.score is not None else None,
        "is_new_best": trial.is_new_best,
        "duration_ms": 0 if stable_durations else trial.duration_ms,
        "error": trial.error,
    }


def write_trial_log(result: SearchResult, path, *, stable_durations: bool = False) -> None:
    """One JSON object per trial, in ordinal order."""
    with open(path, "w", encoding="utf-8") as handle:
        for trial in result.trials:
            line = json.dumps(
                trial_to_dict(trial, stable_durations=stable_durations),
                sort_keys=True,
                ensure_ascii=False,
            )
            handle.write(line + "\n")
