"""segann: segment prompts, annotate segments, search for the best annotation.

The package decomposes a prompt into contiguous segments, defines a finite
grid of human-readable per-segment annotations (type, bracket style,
position, optional instruction sentence, label levels), and searches that
grid for the configuration that maximises a pluggable task objective. The
original prompt is always evaluated first, so the search result never
scores below it.
"""
from .model import (
    AnnotatedPrompt,
    AnnotationConfig,
    AnnotationScheme,
    AnswerKind,
    Bracket,
    Introduction,
    LabelAssignment,
    ObjectiveResult,
    Position,
    Prompt,
    Segmentation,
    neutral_config,
    validate,
)
from .segmenter import (
    Attach,
    DelimiterSpec,
    chop,
    find_boundaries,
    refine,
    segment_fixed_k,
    segment_sentences,
    segment_with_model,
)
from .space import (
    SpaceSpec,
    Vocabulary,
    count_assignments,
    count_configs,
    count_contiguous_segmentations,
    coverage,
    default_space,
    enumerate_configs,
    full_space,
    render,
    rendered_segment,
    strip_annotations,
    wrap_label,
)
from .search import (
    SearchBudget,
    SearchResult,
    TrialRecord,
    coverage_report,
    exhaustive_strategy,
    greedy_coordinate_ascent_strategy,
    optimize,
    random_strategy,
)
from .evaluation import (
    HttpChatBackend,
    ModelRequest,
    ModelResponse,
    PlantedOracle,
    TaskSpec,
    annotate_with_model,
    evaluate_objective,
    extract_answer,
    planted_oracle_backend,
    score,
)
from .stats import (
    RunRecord,
    ScoreMatrix,
    friedman,
    load_dataset,
    nemenyi_cd,
    read_runs,
    split_train_test,
    summarize,
    write_runs,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedPrompt",
    "AnnotationConfig",
    "AnnotationScheme",
    "AnswerKind",
    "Attach",
    "Bracket",
    "DelimiterSpec",
    "HttpChatBackend",
    "Introduction",
    "LabelAssignment",
    "ModelRequest",
    "ModelResponse",
    "ObjectiveResult",
    "PlantedOracle",
    "Position",
    "Prompt",
    "RunRecord",
    "ScoreMatrix",
    "SearchBudget",
    "SearchResult",
    "Segmentation",
    "SpaceSpec",
    "TaskSpec",
    "TrialRecord",
    "Vocabulary",
    "annotate_with_model",
    "chop",
    "count_assignments",
    "count_configs",
    "count_contiguous_segmentations",
    "coverage",
    "coverage_report",
    "default_space",
    "enumerate_configs",
    "evaluate_objective",
    "exhaustive_strategy",
    "extract_answer",
    "find_boundaries",
    "friedman",
    "full_space",
    "greedy_coordinate_ascent_strategy",
    "load_dataset",
    "nemenyi_cd",
    "neutral_config",
    "optimize",
    "planted_oracle_backend",
    "random_strategy",
    "read_runs",
    "refine",
    "render",
    "rendered_segment",
    "score",
    "segment_fixed_k",
    "segment_sentences",
    "segment_with_model",
    "split_train_test",
    "strip_annotations",
    "summarize",
    "validate",
    "wrap_label",
    "write_runs",
]
