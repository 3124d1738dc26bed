from __future__ import annotations

import pytest

from morevqa.core import FrameWindow, MemoryState, QAType, TemporalConjunction
from morevqa.lang import FLAT, parse
from morevqa.planner import (
    classify_question,
    counted_object,
    extract_events,
    rule_plan,
    strip_region_phrase,
    subject_of_event,
)


def _memory(question: str) -> MemoryState:
    return MemoryState(frame_ids=FrameWindow.full(32), question=question)


def test_stage1_temporal_and_type_and_event():
    text = rule_plan(
        "event_parsing", _memory("why is the cat lying on its back at the end of the video?")
    )
    assert 'trim("end")' in text
    assert 'classify("why")' in text
    assert 'parse_event("cat lying on its back")' in text
    assert 'revise_question("why is the cat lying on its back?")' in text


def test_stage1_simple_question_has_no_events():
    text = rule_plan("event_parsing", _memory("what is in the background?"))
    assert 'classify("what")' in text
    assert "parse_event" not in text
    assert "trim" not in text


def test_stage1_ocr_keyword():
    text = rule_plan("event_parsing", _memory("what does the sign say?"))
    assert "require_ocr(true)" in text


def test_stage1_conjunction_split():
    question = "why is the boy walking over to the shelf after playing with the person?"
    text = rule_plan("event_parsing", _memory(question))
    assert 'set_conjunction("after")' in text
    assert 'parse_event("boy walking over to the shelf")' in text
    assert 'parse_event("playing with the person")' in text


def test_stage1_no_temporal_words_means_no_trim():
    text = rule_plan("event_parsing", _memory("why is the dog barking loudly?"))
    assert "trim" not in text


def test_stage2_noop_without_events():
    memory = _memory("what is in the background?")
    assert rule_plan("grounding", memory) == "noop()"


def test_stage2_localize_and_verify_per_event():
    memory = _memory("irrelevant")
    memory.event_queue = ["cat lying on its back"]
    text = rule_plan("grounding", memory)
    assert text.split("\n") == [
        'localize("cat lying on its back")',
        'verify_action("cat lying on its back")',
    ]


def test_stage2_anchor_shift_for_two_events():
    memory = _memory("irrelevant")
    memory.event_queue = ["boy walking to the shelf", "playing with the person"]
    memory.conjunction = TemporalConjunction.AFTER
    assert rule_plan("grounding", memory).split("\n")[-1] == "anchor_then_shift()"


def test_stage3_why_templates_use_subject():
    memory = _memory("why is the grey cat lying on its back?")
    memory.qa_type = QAType.WHY
    memory.event_queue = ["grey cat lying on its back"]
    text = rule_plan("reasoning", memory)
    assert 'subquestion("what is the grey cat doing?")' in text
    assert 'vqa_on_grounded("what is the grey cat interacting with?")' in text


def test_stage3_counting_template():
    memory = _memory("how many bright kites are gliding across the water?")
    memory.qa_type = QAType.COUNTING
    text = rule_plan("reasoning", memory)
    assert 'subquestion("how many bright kites are visible?")' in text


def test_stage3_other_types_noop():
    memory = _memory("what is in the background?")
    memory.qa_type = QAType.WHAT
    assert rule_plan("reasoning", memory) == "noop()"


def test_classify_rules():
    assert classify_question("why is it?") is QAType.WHY
    assert classify_question("how many dogs are there?") is QAType.COUNTING
    assert classify_question("how does it work?") is QAType.HOW
    assert classify_question("where is this?") is QAType.LOCATION
    assert classify_question("describe the scene") is QAType.DESCRIPTION
    assert classify_question("the dog barks") is None


def test_strip_region_phrase():
    assert (
        strip_region_phrase("why is the cat sad at the end of the video?")
        == "why is the cat sad?"
    )
    assert strip_region_phrase("no region here?") == "no region here?"


def test_subject_of_event():
    assert subject_of_event("grey cat lying on its back") == "grey cat"
    assert subject_of_event("boy walking over to the shelf") == "boy"


def test_counted_object():
    assert counted_object("how many bright kites are gliding?") == "bright kites"
    assert counted_object("why is the sky blue?") is None


def test_extract_events_requires_action_token():
    events, conj = extract_events("what is in the background?")
    assert events == [] and conj is None
    events, conj = extract_events("what is the dog doing?")
    assert events == []  # "doing" alone is not a groundable action


@pytest.mark.parametrize("stage", ["event_parsing", "grounding", "reasoning"])
def test_emitted_programs_always_parse(stage, oracle_bundle):
    for row in oracle_bundle.rows:
        memory = _memory(row["question"])
        if stage != "event_parsing":
            # populate the memory the way stage 1 would
            program = parse(rule_plan("event_parsing", memory), FLAT)
            from morevqa.core import RunConfig
            from morevqa.pipeline import execute_event_parsing_program

            execute_event_parsing_program(program, memory, RunConfig())
        parse(rule_plan(stage, memory), FLAT)
