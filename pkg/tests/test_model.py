"""Value types: construction invariants, neutral config, validation."""
from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segann.errors import ContractError
from segann.model import (
    AnnotationScheme,
    Bracket,
    Introduction,
    LabelAssignment,
    ObjectiveResult,
    Position,
    Prompt,
    Segmentation,
    exact_result,
    neutral_config,
    validate,
)
from segann.space import render


def make_scheme(**overrides) -> AnnotationScheme:
    base = dict(
        annotation_type="importance",
        labels=("", "low", "high"),
        bracket=Bracket.SQUARE,
        position=Position.PREFIX,
        introduction=Introduction.WITHOUT_INSTRUCTION,
        instruction_text="",
    )
    base.update(overrides)
    return AnnotationScheme(**base)


def test_prompt_requires_text():
    with pytest.raises(ContractError):
        Prompt(id="x", text="")


def test_prompt_requires_id():
    with pytest.raises(ContractError):
        Prompt(id="", text="hello")


def test_types_are_immutable_values():
    p1 = Prompt(id="a", text="hello")
    p2 = Prompt(id="a", text="hello")
    assert p1 == p2
    with pytest.raises(AttributeError):
        p1.text = "other"


def test_segmentation_round_trips_to_dict():
    seg = Segmentation(prompt_id="p", segments=("a", "b"))
    assert Segmentation.from_dict(seg.to_dict()) == seg


def test_scheme_rejects_missing_neutral_label():
    with pytest.raises(ContractError):
        make_scheme(labels=("low", "high"))


def test_scheme_rejects_duplicate_labels():
    with pytest.raises(ContractError):
        make_scheme(labels=("", "low", "low"))


def test_scheme_instruction_text_matches_condition():
    with pytest.raises(ContractError):
        make_scheme(introduction=Introduction.WITH_INSTRUCTION, instruction_text="")
    with pytest.raises(ContractError):
        make_scheme(instruction_text="follow the labels")
    ok = make_scheme(
        introduction=Introduction.WITH_INSTRUCTION, instruction_text="follow the labels"
    )
    assert ok.instruction_text


def test_assignment_rejects_out_of_range_index():
    from segann.model import AnnotationConfig

    with pytest.raises(ContractError):
        AnnotationConfig(scheme=make_scheme(), assignment=LabelAssignment((0, 3)))


def test_neutral_config_three_segments():
    seg = Segmentation(prompt_id="p", segments=("a", "b", "c"))
    config = neutral_config(seg, make_scheme())
    assert config.assignment.indices == (0, 0, 0)
    assert config.scheme.introduction == Introduction.WITHOUT_INSTRUCTION


def test_neutral_config_single_segment():
    seg = Segmentation(prompt_id="p", segments=("abc",))
    assert neutral_config(seg, make_scheme()).assignment.indices == (0,)


def test_neutral_config_strips_instruction():
    seg = Segmentation(prompt_id="p", segments=("a",))
    scheme = make_scheme(
        introduction=Introduction.WITH_INSTRUCTION, instruction_text="heed the labels"
    )
    config = neutral_config(seg, scheme)
    assert config.scheme.instruction_text == ""
    assert config.is_neutral


def test_validate_accepts_exact_partition():
    p = Prompt(id="p", text="ab")
    assert validate(p, Segmentation(prompt_id="p", segments=("a", "b"))) is None


def test_validate_reports_concatenation_mismatch():
    p = Prompt(id="p", text="ab")
    msg = validate(p, Segmentation(prompt_id="p", segments=("a", "c")))
    assert msg is not None and "concatenation" in msg


def test_validate_reports_empty_segment_first():
    p = Prompt(id="p", text="ab")
    msg = validate(p, Segmentation(prompt_id="p", segments=("ab", "")))
    assert msg is not None and "empty" in msg


def test_validate_reports_id_mismatch():
    p = Prompt(id="p", text="ab")
    msg = validate(p, Segmentation(prompt_id="other", segments=("ab",)))
    assert msg is not None and "id mismatch" in msg


def test_objective_result_checks_score_consistency():
    with pytest.raises(ContractError):
        ObjectiveResult(
            score=0.9, per_seed_correct=(True, False), self_consistency=0.5, seeds=2
        )


def test_objective_result_round_trips():
    result = exact_result(3, 5)
    assert ObjectiveResult.from_dict(result.to_dict()) == result
    assert result.score == 3 / 5
    assert result.self_consistency == 3 / 5


def test_exact_result_bounds():
    with pytest.raises(ContractError):
        exact_result(5, 4)
    assert exact_result(0, 4).self_consistency == 1.0


@st.composite
def segmentations(draw):
    text = draw(st.text(min_size=1, max_size=60))
    n_cuts = draw(st.integers(0, min(5, len(text) - 1)))
    cuts = sorted(
        draw(
            st.lists(
                st.integers(1, len(text) - 1) if len(text) > 1 else st.just(1),
                min_size=n_cuts,
                max_size=n_cuts,
                unique=True,
            )
        )
    ) if len(text) > 1 else []
    bounds = [0, *cuts, len(text)]
    segments = tuple(text[a:b] for a, b in zip(bounds, bounds[1:]))
    return text, Segmentation(prompt_id="fuzz", segments=segments)


@given(segmentations())
@settings(max_examples=200)
def test_neutral_render_identity_fuzz(case):
    """Rendering the neutral config reproduces the prompt for any partition."""
    text, segmentation = case
    prompt = Prompt(id="fuzz", text=text)
    assert validate(prompt, segmentation) is None
    config = neutral_config(segmentation, make_scheme())
    assert render(segmentation, config).text == text


def test_concatenation_identity_random_partitions():
    rng = random.Random(7)
    for _ in range(100):
        length = rng.randint(1, 50)
        text = "".join(rng.choice("abc \n.!x") for _ in range(length))
        cuts = sorted(rng.sample(range(1, length), rng.randint(0, min(4, length - 1))) if length > 1 else [])
        bounds = [0, *cuts, length]
        seg = Segmentation(
            prompt_id="r", segments=tuple(text[a:b] for a, b in zip(bounds, bounds[1:]))
        )
        assert seg.text == text
