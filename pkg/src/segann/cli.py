"""Command line interface.

Subcommands: segment, space count, space enumerate, optimize,
annotate-llm, report. One JSON config file drives optimize; flags
override config fields. Exit codes: 0 ok, 1 runtime failure, 2 invalid
input. Credentials are read from the environment variable named in the
backend config and never stored in logs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import presets
from .errors import (
    ContractError,
    DatasetError,
    InfeasibleError,
    IntegrityError,
    PatternError,
    SegannError,
)
from .evaluation import (
    HttpChatBackend,
    PlantedOracle,
    TaskSpec,
    annotate_with_model,
    evaluate_objective,
)
from .model import AnswerKind, LabelAssignment, Prompt, Segmentation, validate
from .search import (
    SearchBudget,
    SearchResult,
    coverage_report,
    exhaustive_strategy,
    greedy_coordinate_ascent_strategy,
    optimize,
    random_strategy,
    write_trial_log,
)
from .segmenter import Attach, DelimiterSpec, segment_fixed_k, segment_sentences, refine
from .space import (
    SpaceSpec,
    count_configs,
    default_space,
    enumerate_configs,
    full_space,
    space_from_dict,
)
from .stats import (
    RunRecord,
    ScoreMatrix,
    friedman,
    nemenyi_cd,
    nemenyi_pairs,
    read_runs,
    summarize,
    summary_csv,
    summary_table,
    write_runs,
    load_dataset,
)

_INVALID_INPUT = (
    ContractError,
    DatasetError,
    IntegrityError,
    PatternError,
    InfeasibleError,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
)


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------


def _segment_from_args(prompt: Prompt, args) -> Segmentation:
    if args.k is not None:
        return segment_fixed_k(prompt, args.k)
    if args.delimiters:
        spec = DelimiterSpec(
            patterns=tuple(args.delimiters),
            keep_delimiter=Attach(args.attach),
            regex=args.regex,
        )
        return refine(
            Segmentation(prompt_id=prompt.id, segments=(prompt.text,)), spec
        )
    return segment_sentences(prompt)


def cmd_segment(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    if not text:
        raise ContractError(f"{args.file} is empty")
    prompt = Prompt(id=args.prompt_id or Path(args.file).stem, text=text)
    segmentation = _segment_from_args(prompt, args)
    problem = validate(prompt, segmentation)
    if problem is not None:
        raise ContractError(f"segmentation failed validation: {problem}")
    payload = json.dumps(segmentation.to_dict(), ensure_ascii=False, indent=2)
    if args.output:
        Path(args.output).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    return 0


# ---------------------------------------------------------------------------
# space
# ---------------------------------------------------------------------------


def _space_from_args(args, segment_count: int) -> SpaceSpec:
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        return space_from_dict(data, segment_count)
    if args.preset == "full":
        return full_space(segment_count, include_neutral=args.include_neutral)
    return default_space(segment_count, include_neutral=args.include_neutral)


def cmd_space_count(args) -> int:
    spec = _space_from_args(args, args.segments)
    print(count_configs(spec))
    return 0


def cmd_space_enumerate(args) -> int:
    from .search import config_to_dict

    spec = _space_from_args(args, args.segments)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for i, config in enumerate(enumerate_configs(spec)):
            if args.limit is not None and i >= args.limit:
                break
            out.write(json.dumps(config_to_dict(config), sort_keys=True) + "\n")
    finally:
        if args.output:
            out.close()
    return 0


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------


def _build_segmenter(config: dict):
    kind = config.get("kind", "sentences")
    if kind == "sentences":
        return segment_sentences
    if kind == "fixed_k":
        k = int(config["k"])
        return lambda prompt: segment_fixed_k(prompt, k)
    if kind == "delimiters":
        spec = DelimiterSpec(
            patterns=tuple(config["patterns"]),
            keep_delimiter=Attach(config.get("attach", "left")),
            regex=bool(config.get("regex", False)),
        )
        return lambda prompt: refine(
            Segmentation(prompt_id=prompt.id, segments=(prompt.text,)), spec
        )
    raise ContractError(f"unknown segmenter kind {kind!r}")


def _build_space(config: dict, segment_count: int) -> SpaceSpec:
    if "preset" in config:
        builder = full_space if config["preset"] == "full" else default_space
        return builder(
            segment_count, include_neutral=bool(config.get("include_neutral", False))
        )
    return space_from_dict(config, segment_count)


def _build_strategy(name: str, spec: SpaceSpec, seed: int):
    if name == "exhaustive":
        return exhaustive_strategy(spec)
    if name == "random":
        return random_strategy(spec, seed)
    if name == "greedy":
        return greedy_coordinate_ascent_strategy(spec, seed)
    raise ContractError(f"unknown strategy {name!r}; use exhaustive, random or greedy")


def _parse_oracle_target(text: str, segment_count: int) -> LabelAssignment:
    try:
        indices = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise ContractError(f"bad oracle target {text!r}: {exc}") from exc
    if len(indices) != segment_count:
        raise ContractError(
            f"oracle target has {len(indices)} indices, need {segment_count}"
        )
    return LabelAssignment(indices=indices)


def run_optimize(config: dict, *, parallelism: int = 4, echo=print) -> list[dict]:
    """Execute one optimisation config over its dataset; returns summaries."""
    out_dir = Path(config.get("output_dir", "runs"))
    out_dir.mkdir(parents=True, exist_ok=True)
    prompts = load_dataset(config["dataset"])
    segmenter = _build_segmenter(config.get("segmenter", {}))
    strategy_name = config.get("strategy", "exhaustive")
    budget_cfg = config.get("budget", {})
    budget = SearchBudget(
        trials_per_round=int(budget_cfg.get("trials_per_round", 27)),
        max_rounds=int(budget_cfg.get("max_rounds", 1)),
        rng_seed=int(budget_cfg.get("rng_seed", 0)),
    )
    backend_cfg = config.get("backend", "oracle:")
    oracle_mode = isinstance(backend_cfg, str) and backend_cfg.startswith("oracle:")
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")
    ).hexdigest()[:12]

    summaries = []
    run_records = []
    for prompt in prompts:
        segmentation = segmenter(prompt)
        spec = _build_space(config.get("space", {}), len(segmentation.segments))
        strategy = _build_strategy(strategy_name, spec, budget.rng_seed)
        if oracle_mode:
            target = _parse_oracle_target(
                backend_cfg[len("oracle:"):], len(segmentation.segments)
            )
            evaluator = PlantedOracle(target)
        else:
            backend = HttpChatBackend.from_config(backend_cfg)
            task_cfg = config.get("task", {})
            task = TaskSpec(
                dataset=task_cfg.get("dataset", prompt.source or "unknown"),
                answer_kind=AnswerKind(task_cfg["answer_kind"])
                if "answer_kind" in task_cfg
                else prompt.answer_kind,
                system_prompt_preset=task_cfg.get("system_prompt_preset"),
                seeds=int(task_cfg.get("seeds", 10)),
                temperature=float(task_cfg.get("temperature", 0.7)),
            )
            if task.answer_kind != AnswerKind.FREE_TEXT and not prompt.answer:
                raise ContractError(f"prompt {prompt.id} has no gold answer")

            def evaluator(rendered, _prompt=prompt, _task=task, _backend=backend):
                return evaluate_objective(
                    _task,
                    _backend,
                    rendered,
                    _prompt.answer or "",
                    parallelism=parallelism,
                )

        result = optimize(prompt, segmentation, spec, strategy, budget, evaluator)
        covered = coverage_report(result, spec)

        log_path = out_dir / f"{_safe_name(prompt.id)}.trials.jsonl"
        write_trial_log(result, log_path, stable_durations=oracle_mode)
        best_path = out_dir / f"{_safe_name(prompt.id)}.best.txt"
        best_path.write_text(result.best_rendered.text, encoding="utf-8")

        run_records.append(
            RunRecord(
                run_id=f"{strategy_name}-{budget.rng_seed}",
                prompt_id=prompt.id,
                method=strategy_name,
                dataset=prompt.source or "unknown",
                score=result.best_score,
                timestamp=datetime.now(timezone.utc).isoformat(),
                config_digest=digest,
            )
        )
        summary = {
            "prompt_id": prompt.id,
            "segments": len(segmentation.segments),
            "trials": len(result.trials),
            "best_score": result.best_score.score,
            "coverage_pct": covered,
            "rounds": result.rounds_executed,
            "converged": result.converged,
            "trial_log": str(log_path),
        }
        summaries.append(summary)
        echo(
            f"{prompt.id}: best={summary['best_score']:.4f} "
            f"coverage={covered:.2f}% trials={summary['trials']} "
            f"rounds={summary['rounds']} converged={summary['converged']}"
        )
    write_runs(run_records, out_dir / "runs.jsonl")
    return summaries


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def cmd_optimize(args) -> int:
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    for key, value in (
        ("strategy", args.strategy),
        ("output_dir", args.out),
        ("dataset", args.dataset),
    ):
        if value is not None:
            config[key] = value
    budget = config.setdefault("budget", {})
    for key, value in (
        ("trials_per_round", args.trials),
        ("max_rounds", args.rounds),
        ("rng_seed", args.seed),
    ):
        if value is not None:
            budget[key] = value
    run_optimize(config, parallelism=args.parallelism)
    return 0


# ---------------------------------------------------------------------------
# annotate-llm
# ---------------------------------------------------------------------------


def cmd_annotate_llm(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8").strip()
    if not text:
        raise ContractError(f"{args.file} is empty")
    prompt = Prompt(id=Path(args.file).stem, text=text)
    backend_cfg = json.loads(Path(args.backend).read_text(encoding="utf-8"))
    backend = HttpChatBackend.from_config(backend_cfg)
    instruction = (
        Path(args.instruction_file).read_text(encoding="utf-8")
        if args.instruction_file
        else presets.annotator_instruction(args.preset)
    )
    annotation = annotate_with_model(prompt, backend, instruction)
    if args.output:
        Path(args.output).write_text(annotation.text, encoding="utf-8")
    else:
        print(annotation.text)
    if annotation.clear:
        print("note: model reported the prompt as already clear", file=sys.stderr)
    elif not annotation.accepted:
        print(
            "warning: model output failed the bracket-residue check; "
            "returning the original prompt",
            file=sys.stderr,
        )
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    records = []
    seen_keys: set[tuple[str, str]] = set()
    for log in args.logs:
        for record in read_runs(log):
            key = (record.run_id, record.prompt_id)
            if key in seen_keys:
                raise IntegrityError(f"duplicate run record {key} across logs")
            seen_keys.add(key)
            records.append(record)
    if not records:
        raise ContractError("run logs contain no records")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    group_by = ("method", "dataset")
    rows = summarize(records, group_by)

    sections = ["== Mean accuracy by method and dataset ==",
                summary_table(rows, group_by)]
    methods = sorted({r.method for r in records})
    datasets = sorted({r.dataset for r in records})
    ranks_figure = None
    if len(methods) >= 2 and len(datasets) >= 2:
        matrix = ScoreMatrix.from_records(records)
        outcome = friedman(matrix)
        sections.append("")
        sections.append("== Friedman test ==")
        sections.append(f"methods k={len(matrix.methods)}, blocks N={len(matrix.blocks)}")
        sections.append(f"chi-square statistic: {outcome.statistic:.4f}")
        sections.append("mean ranks (lower is better):")
        for name, rank in sorted(
            zip(matrix.methods, outcome.mean_ranks), key=lambda item: item[1]
        ):
            sections.append(f"  {name}: {rank:.3f}")
        if 2 <= len(matrix.methods) <= 10:
            cd = nemenyi_cd(len(matrix.methods), len(matrix.blocks), args.alpha)
            sections.append("")
            sections.append(f"== Nemenyi critical difference (alpha={args.alpha}) ==")
            sections.append(f"CD = {cd:.4f}")
            for pair in nemenyi_pairs(matrix.methods, outcome.mean_ranks, cd):
                verdict = "significant" if pair.significant else "not significant"
                sections.append(
                    f"  {pair.method_a} vs {pair.method_b}: "
                    f"gap {pair.rank_gap:.3f} -> {verdict}"
                )
            ranks_figure = (matrix.methods, outcome.mean_ranks, cd)
        else:
            sections.append("notice: Nemenyi table covers 2..10 methods; skipped")
    else:
        sections.append("")
        sections.append(
            "notice: Friedman test needs >= 2 methods and >= 2 datasets; "
            "only the means table is reported"
        )

    report_text = "\n".join(sections) + "\n"
    print(report_text, end="")
    (out_dir / "report.txt").write_text(report_text, encoding="utf-8")
    (out_dir / "summary.csv").write_text(summary_csv(rows, group_by), encoding="utf-8")

    if not args.no_figures:
        from . import plots

        plots.accuracy_figure(rows, out_dir / "accuracy.png")
        if ranks_figure is not None:
            plots.cd_diagram(*ranks_figure, out_dir / "ranks_cd.png")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segann",
        description="Segment prompts, annotate segments, search annotation configurations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_seg = sub.add_parser("segment", help="split a prompt file into segments")
    p_seg.add_argument("file")
    group = p_seg.add_mutually_exclusive_group()
    group.add_argument("--sentences", action="store_true", help="sentence split (default)")
    group.add_argument("--k", type=int, help="group sentences into k segments")
    group.add_argument("--delimiters", nargs="+", help="split on literal patterns")
    p_seg.add_argument("--attach", choices=["left", "right"], default="left")
    p_seg.add_argument("--regex", action="store_true", help="treat patterns as regexes")
    p_seg.add_argument("--prompt-id", default=None)
    p_seg.add_argument("-o", "--output", default=None)
    p_seg.set_defaults(func=cmd_segment)

    p_space = sub.add_parser("space", help="inspect an annotation space")
    space_sub = p_space.add_subparsers(dest="space_command", required=True)
    for name, func in (("count", cmd_space_count), ("enumerate", cmd_space_enumerate)):
        p = space_sub.add_parser(name)
        p.add_argument("--segments", type=int, required=True)
        p.add_argument("--config", default=None, help="space spec JSON file")
        p.add_argument("--preset", choices=["default", "full"], default="default")
        p.add_argument("--include-neutral", action="store_true")
        if name == "enumerate":
            p.add_argument("--limit", type=int, default=None)
            p.add_argument("-o", "--output", default=None)
        p.set_defaults(func=func)

    p_opt = sub.add_parser("optimize", help="run the annotation search")
    p_opt.add_argument("--config", required=True, help="run config JSON file")
    p_opt.add_argument("--strategy", choices=["exhaustive", "random", "greedy"])
    p_opt.add_argument("--dataset", default=None)
    p_opt.add_argument("--trials", type=int, default=None)
    p_opt.add_argument("--rounds", type=int, default=None)
    p_opt.add_argument("--seed", type=int, default=None)
    p_opt.add_argument("--out", default=None)
    p_opt.add_argument("--parallelism", type=int, default=4)
    p_opt.set_defaults(func=cmd_optimize)

    p_ann = sub.add_parser("annotate-llm", help="one-shot model annotation of a prompt")
    p_ann.add_argument("file")
    p_ann.add_argument("--backend", required=True, help="backend config JSON file")
    p_ann.add_argument("--preset", default="gpt-4o", help="annotator instruction preset")
    p_ann.add_argument("--instruction-file", default=None)
    p_ann.add_argument("-o", "--output", default=None)
    p_ann.set_defaults(func=cmd_annotate_llm)

    p_rep = sub.add_parser("report", help="summarise run logs; Friedman/Nemenyi section")
    p_rep.add_argument("logs", nargs="+")
    p_rep.add_argument("--out", default="report")
    p_rep.add_argument("--alpha", type=float, default=0.05)
    p_rep.add_argument("--no-figures", action="store_true")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INVALID_INPUT as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SegannError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
