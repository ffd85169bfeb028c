"""Dataset loading, splits, run persistence and nonparametric comparison.

The comparison pipeline mirrors standard multi-method benchmarking
practice: mean accuracy per method and dataset, Friedman rank test over
the methods, and the Nemenyi critical difference for post-hoc pairwise
reading.
"""
from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path

from .errors import ContractError, DatasetError, IntegrityError
from .model import AnswerKind, ObjectiveResult, Prompt

_CHOICE_LETTERS = "ABCDEFGHIJ"

_NUMERIC_DATASETS = ("gsm8k", "multiarith", "multi-arith", "svamp", "asdiv")
_CHOICE_DATASETS = ("mmlu", "aqua", "arc", "csqa")
_BOOL_WORDS = {"true", "false", "yes", "no"}


def _round2(value: float | Fraction) -> float:
    if isinstance(value, Fraction):
        dec = Decimal(value.numerator) / Decimal(value.denominator)
    else:
        dec = Decimal(repr(value))
    return float(dec.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _infer_kind(record: dict, dataset: str) -> AnswerKind:
    explicit = record.get("answer_kind")
    if explicit:
        return AnswerKind(explicit)
    name = dataset.lower()
    if any(tag in name for tag in _NUMERIC_DATASETS):
        return AnswerKind.NUMERIC
    if any(tag in name for tag in _CHOICE_DATASETS):
        return AnswerKind.MULTIPLE_CHOICE
    if record.get("choices"):
        return AnswerKind.MULTIPLE_CHOICE
    answer = str(record.get("answer", "")).strip().lower()
    if answer in _BOOL_WORDS:
        return AnswerKind.BOOLEAN
    try:
        Fraction(answer.replace(",", ""))
        return AnswerKind.NUMERIC
    except (ValueError, ZeroDivisionError):
        return AnswerKind.FREE_TEXT


def _gold_answer(raw: object) -> str:
    text = str(raw).strip()
    if "####" in text:
        text = text.rsplit("####", 1)[1].strip()
    return text


def _question_text(record: dict) -> str:
    text = record["question"]
    choices = record.get("choices")
    if not choices:
        return text
    if all(c.strip()[:1].upper() in _CHOICE_LETTERS and c.strip()[1:2] in ").:" for c in choices):
        lines = choices
    else:
        lines = [f"({_CHOICE_LETTERS[i]}) {c}" for i, c in enumerate(choices)]
    return text + "\n" + "\n".join(lines)


def load_dataset(path, dataset_name: str | None = None) -> list[Prompt]:
    """Read prompts from a JSONL file of {question, answer, choices?} records.

    Answer kind comes from an explicit ``answer_kind`` field, else from the
    dataset name, else from the answer's shape. Gold answers with a
    ``####`` marker keep only the part after the marker. Prompts keep the
    file's order.
    """
    path = Path(path)
    prompts = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path.name}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"{path.name}:{lineno}: expected a JSON object")
            for fieldname in ("question", "answer"):
                if fieldname not in record:
                    raise DatasetError(
                        f"{path.name}:{lineno}: missing field {fieldname!r}"
                    )
            dataset = record.get("dataset") or dataset_name or path.stem
            prompts.append(
                Prompt(
                    id=str(record.get("id") or f"{path.stem}:{lineno}"),
                    text=_question_text(record),
                    answer=_gold_answer(record["answer"]),
                    answer_kind=_infer_kind(record, dataset),
                    source=dataset,
                )
            )
    return prompts


def split_train_test(
    prompts: list[Prompt], ratio: float = 0.8, seed: int = 0
) -> tuple[list[Prompt], list[Prompt]]:
    """Deterministic shuffled split; both sides non-empty."""
    if not 0 < ratio < 1:
        raise ContractError("ratio must lie strictly between 0 and 1")
    n = len(prompts)
    if n < 2:
        raise ContractError("need at least 2 prompts to split")
    shuffled = list(prompts)
    random.Random(seed).shuffle(shuffled)
    n_train = int(ratio * n + 0.5)
    n_train = min(max(n_train, 1), n - 1)
    return shuffled[:n_train], shuffled[n_train:]


# ---------------------------------------------------------------------------
# Run persistence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    """One scored (method, prompt) evaluation, as persisted to run logs."""

    run_id: str
    prompt_id: str
    method: str
    dataset: str
    score: ObjectiveResult
    timestamp: str
    config_digest: str

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "prompt_id": self.prompt_id,
            "method": self.method,
            "dataset": self.dataset,
            "score": self.score.to_dict(),
            "timestamp": self.timestamp,
            "config_digest": self.config_digest,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            run_id=data["run_id"],
            prompt_id=data["prompt_id"],
            method=data["method"],
            dataset=data["dataset"],
            score=ObjectiveResult.from_dict(data["score"]),
            timestamp=data["timestamp"],
            config_digest=data["config_digest"],
        )


def write_runs(records: list[RunRecord], path) -> None:
    """Append records to a JSONL run log, one object per line."""
    with open(path, "a", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def read_runs(path) -> list[RunRecord]:
    """Load a JSONL run log; duplicate (run_id, prompt_id) pairs are an error."""
    records = []
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            record = RunRecord.from_dict(json.loads(line))
            key = (record.run_id, record.prompt_id)
            if key in seen:
                raise IntegrityError(
                    f"{path}:{lineno}: duplicate run record {key}"
                )
            seen.add(key)
            records.append(record)
    return records


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    group: tuple[str, ...]
    runs: int
    mean_pct: float
    std_pct: float


def summarize(
    records: list[RunRecord],
    group_by: tuple[str, ...] = ("method", "dataset"),
) -> list[SummaryRow]:
    """Mean and sample standard deviation of scores per group, in percent."""
    for key in group_by:
        if key not in ("method", "dataset"):
            raise ContractError(f"cannot group by {key!r}")
    groups: dict[tuple[str, ...], list[float]] = {}
    for record in records:
        key = tuple(getattr(record, attr) for attr in group_by)
        groups.setdefault(key, []).append(record.score.score)
    rows = []
    for key in sorted(groups):
        scores = groups[key]
        n = len(scores)
        mean = sum(scores) / n
        if n > 1:
            var = sum((s - mean) ** 2 for s in scores) / (n - 1)
            std = math.sqrt(var)
        else:
            std = 0.0
        rows.append(
            SummaryRow(
                group=key,
                runs=n,
                mean_pct=_round2(mean * 100),
                std_pct=_round2(std * 100),
            )
        )
    return rows


def summary_table(rows: list[SummaryRow], group_by: tuple[str, ...]) -> str:
    """Aligned plain-text table of summary rows."""
    header = [*group_by, "runs", "mean%", "std%"]
    body = [
        [*row.group, str(row.runs), f"{row.mean_pct:.2f}", f"{row.std_pct:.2f}"]
        for row in rows
    ]
    widths = [
        max(len(header[i]), *(len(line[i]) for line in body)) if body else len(header[i])
        for i in range(len(header))
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for line in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)))
    return "\n".join(lines)


def summary_csv(rows: list[SummaryRow], group_by: tuple[str, ...]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([*group_by, "runs", "mean_pct", "std_pct"])
    for row in rows:
        writer.writerow([*row.group, row.runs, f"{row.mean_pct:.2f}", f"{row.std_pct:.2f}"])
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Friedman / Nemenyi
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreMatrix:
    """Mean accuracies: one row per method, one column per block/dataset."""

    methods: tuple[str, ...]
    blocks: tuple[str, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "values", tuple(tuple(row) for row in self.values))
        if len(self.methods) < 2 or len(self.blocks) < 2:
            raise ContractError("need at least 2 methods and 2 blocks")
        if len(self.values) != len(self.methods) or any(
            len(row) != len(self.blocks) for row in self.values
        ):
            raise ContractError("matrix shape must be methods x blocks with no gaps")

    @classmethod
    def from_records(cls, records: list[RunRecord]) -> "ScoreMatrix":
        methods = tuple(sorted({r.method for r in records}))
        blocks = tuple(sorted({r.dataset for r in records}))
        cells: dict[tuple[str, str], list[float]] = {}
        for record in records:
            cells.setdefault((record.method, record.dataset), []).append(
                record.score.score
            )
        values = []
        for method in methods:
            row = []
            for block in blocks:
                scores = cells.get((method, block))
                if not scores:
                    raise ContractError(
                        f"missing cell: method {method!r} has no runs on {block!r}"
                    )
                row.append(sum(scores) / len(scores))
            values.append(tuple(row))
        return cls(methods=methods, blocks=blocks, values=tuple(values))


def _ranks_descending(scores: list[float]) -> list[float]:
    """1-based ranks, best score first, ties sharing their average rank."""
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    ranks = [0.0] * len(scores)
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and scores[order[end + 1]] == scores[order[pos]]:
            end += 1
        avg = (pos + end) / 2 + 1
        for idx in order[pos : end + 1]:
            ranks[idx] = avg
        pos = end + 1
    return ranks


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    mean_ranks: tuple[float, ...]


def friedman(matrix: ScoreMatrix) -> FriedmanResult:
    """Friedman chi-square over methods ranked within each block.

    Methods are ranked descending by score per block (rank 1 best, ties
    averaged). The statistic is
    12N/(k(k+1)) * (sum of squared mean ranks - k(k+1)^2/4).
    """
    k = len(matrix.methods)
    n_blocks = len(matrix.blocks)
    rank_sums = [0.0] * k
    for j in range(n_blocks):
        column = [matrix.values[i][j] for i in range(k)]
        for i, rank in enumerate(_ranks_descending(column)):
            rank_sums[i] += rank
    mean_ranks = tuple(total / n_blocks for total in rank_sums)
    statistic = (12 * n_blocks) / (k * (k + 1)) * (
        sum(r * r for r in mean_ranks) - k * (k + 1) ** 2 / 4
    )
    return FriedmanResult(statistic=statistic, mean_ranks=mean_ranks)


# Two-tailed Nemenyi critical values q_alpha(k) for alpha=0.05, i.e. the
# studentized range quantile q(0.05; k, inf) / sqrt(2). Source: Demsar,
# "Statistical Comparisons of Classifiers over Multiple Data Sets",
# JMLR 7 (2006), Table 5(a); cross-checked in the test suite against
# scipy.stats.studentized_range.
_NEMENYI_Q_05 = {
    2: 1.960,
    3: 2.343,
    4: 2.569,
    5: 2.728,
    6: 2.850,
    7: 2.949,
    8: 3.031,
    9: 3.102,
    10: 3.164,
}


def nemenyi_cd(k: int, n_blocks: int, alpha: float = 0.05) -> float:
    """Critical difference of mean ranks for the Nemenyi post-hoc test."""
    if alpha != 0.05:
        raise ContractError("only alpha=0.05 is tabulated")
    if k not in _NEMENYI_Q_05:
        raise ContractError("k must be between 2 and 10")
    if n_blocks < 1:
        raise ContractError("need at least one block")
    return _NEMENYI_Q_05[k] * math.sqrt(k * (k + 1) / (6 * n_blocks))


@dataclass(frozen=True)
class PairDifference:
    method_a: str
    method_b: str
    rank_gap: float
    significant: bool


def nemenyi_pairs(
    methods: tuple[str, ...], mean_ranks: tuple[float, ...], cd: float
) -> list[PairDifference]:
    """All method pairs with their mean-rank gap versus the critical difference."""
    pairs = []
    for a in range(len(methods)):
        for b in range(a + 1, len(methods)):
            gap = abs(mean_ranks[a] - mean_ranks[b])
            pairs.append(
                PairDifference(
                    method_a=methods[a],
                    method_b=methods[b],
                    rank_gap=gap,
                    significant=gap > cd,
                )
            )
    return pairs
