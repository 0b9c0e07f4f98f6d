"""Debate prompts (byte-pinned), decision parsing, stance generation, NLL."""

import math

import pytest

from memattr.dataset import HarmLabel
from memattr.gateway import MockBackend, Scenario, TokenLogProbs
from memattr.kb import make_entry
from memattr.pipeline import (
    Fragment,
    GateConfig,
    KnowledgeContext,
    QueryItem,
    QueryProvenance,
    QuerySet,
)
from memattr.reasoning import (
    AttributionInput,
    MemeTuple,
    ParseStatus,
    attribute,
    build_attribution_prompt,
    choose_language,
    generate_stance,
    nll,
    parse_decision,
    render_decision,
    render_knowledge,
    score_completion,
)


def make_context(*pairs):
    fragments = tuple(
        Fragment(
            entry=make_entry(
                id=f"e{i}", term=term, category="Others", definition=definition
            ),
            s_hybrid=0.5,
            p_rel=0.9,
        )
        for i, (term, definition) in enumerate(pairs)
    )
    qset = QuerySet(items=(QueryItem(text="q", provenance=QueryProvenance.TEXT),))
    return KnowledgeContext(fragments=fragments, query_set=qset, config=GateConfig())


EMPTY_CONTEXT = make_context()


# --- language and knowledge rendering ---------------------------------------


def test_choose_language_auto():
    assert choose_language(MemeTuple(text="菜狗", description="")) == "zh"
    assert choose_language(MemeTuple(text="lol", description="a cat")) == "en"
    assert choose_language(MemeTuple(text="lol", description="一只猫")) == "zh"


def test_choose_language_override():
    meme = MemeTuple(text="菜狗", description="")
    assert choose_language(meme, "en") == "en"
    assert choose_language(meme, "zh") == "zh"


def test_render_knowledge_lines():
    ctx = make_context(("菜狗", "水平差的人"), ("躺平", "放弃竞争"))
    assert render_knowledge(ctx, "zh") == "菜狗: 水平差的人\n躺平: 放弃竞争"


def test_render_knowledge_empty():
    assert render_knowledge(EMPTY_CONTEXT, "zh") == "（未检索到）"
    assert render_knowledge(EMPTY_CONTEXT, "en") == "(none retrieved)"


# --- prompt rendering, byte-pinned ------------------------------------------

PINNED_ZH = """你是一位精通中国互联网文化与社会心理学的表情包分析专家。
给定一个中文表情包以及两种对立的解读，请判断该表情包是否表达有害内容。在做出判断前，请结合背景知识权衡两种解读的相对意图。

输入信息：
表情包图片：（未提供）
表情包文字：菜狗
表情包图片描述：一只狗
表情包背景知识：
菜狗: 水平差的人
无害解读：自嘲玩笑
有害解读：攻击他人

输出要求：
答案：{有害 / 无害}
理由：简要说明你的判断依据"""

PINNED_EN = """You are a meme analysis expert proficient in Chinese internet culture and social psychology.
Given a Chinese meme and two opposing interpretations, decide whether the meme expresses harmful content. Weigh the relative intent of both readings against the background knowledge before deciding.

Input Information:
Meme Image: img.png
Meme Text: lol
Meme Image Description: a cat
Meme Background Knowledge:
(none retrieved)
Non-harmful Interpretation: just a joke
Harmful Interpretation: an attack

Output Requirements:
Answer: {Harmful / Non-harmful}
Reason: a concise justification for your decision"""


def test_zh_prompt_bytes():
    input = AttributionInput(
        meme=MemeTuple(text="菜狗", description="一只狗"),
        exp_nonharmful="自嘲玩笑",
        exp_harmful="攻击他人",
        knowledge=make_context(("菜狗", "水平差的人")),
    )
    assert build_attribution_prompt(input) == PINNED_ZH


def test_en_prompt_bytes():
    input = AttributionInput(
        meme=MemeTuple(text="lol", description="a cat", image="img.png"),
        exp_nonharmful="just a joke",
        exp_harmful="an attack",
        knowledge=EMPTY_CONTEXT,
    )
    assert build_attribution_prompt(input) == PINNED_EN


def test_language_flag_forces_template():
    input = AttributionInput(
        meme=MemeTuple(text="菜狗", description="一只狗"),
        exp_nonharmful="自嘲玩笑",
        exp_harmful="攻击他人",
        knowledge=EMPTY_CONTEXT,
    )
    en = build_attribution_prompt(input, language="en")
    assert en.startswith("You are a meme analysis expert")
    assert "(none retrieved)" in en
    assert "(not provided)" in en


def test_meme_tuple_validation():
    with pytest.raises(ValueError):
        MemeTuple(text=" ", description="")
    MemeTuple(text="", description="图")  # description alone suffices


def test_attribution_input_validation():
    meme = MemeTuple(text="t", description="")
    with pytest.raises(ValueError):
        AttributionInput(
            meme=meme, exp_nonharmful="", exp_harmful="h", knowledge=EMPTY_CONTEXT
        )
    with pytest.raises(ValueError):
        AttributionInput(
            meme=meme, exp_nonharmful="n", exp_harmful=" ", knowledge=EMPTY_CONTEXT
        )


# --- decision parsing -------------------------------------------------------


def check(response, label, reason, status):
    d = parse_decision(response)
    assert (d.label, d.reason, d.parse_status) == (label, reason, status)
    assert d.raw_response == response


def test_parse_clean_en():
    check(
        "Answer: Harmful\nReason: uses slur X",
        HarmLabel.HARMFUL, "uses slur X", ParseStatus.CLEAN,
    )


def test_parse_clean_zh():
    check(
        "答案：无害\n理由：自嘲幽默",
        HarmLabel.NON_HARMFUL, "自嘲幽默", ParseStatus.CLEAN,
    )


def test_parse_clean_same_line():
    check(
        "Answer: Harmful Reason: mocks a region",
        HarmLabel.HARMFUL, "mocks a region", ParseStatus.CLEAN,
    )


def test_parse_clean_case_insensitive():
    check("ANSWER: HARMFUL\nREASON: x", HarmLabel.HARMFUL, "x", ParseStatus.CLEAN)


def test_parse_clean_answer_after_preamble():
    check(
        "Let me think.\nAnswer: Non-harmful\nReason: playful",
        HarmLabel.NON_HARMFUL, "playful", ParseStatus.CLEAN,
    )


def test_parse_clean_multiline_reason():
    d = parse_decision("Answer: Harmful\nReason: first\nsecond")
    assert d.parse_status is ParseStatus.CLEAN
    assert d.reason == "first\nsecond"


def test_parse_non_harmful_not_mistaken_for_harmful():
    check(
        "Answer: Non-harmful\nReason: ok",
        HarmLabel.NON_HARMFUL, "ok", ParseStatus.CLEAN,
    )


def test_parse_recovered_no_reason_marker():
    check(
        "Answer: Harmful\nbecause it mocks a group",
        HarmLabel.HARMFUL, "because it mocks a group", ParseStatus.RECOVERED,
    )


def test_parse_recovered_bare_answer():
    raw = "Answer: Harmful"
    check(raw, HarmLabel.HARMFUL, raw, ParseStatus.RECOVERED)


def test_parse_recovered_freeform_zh():
    raw = "该表情包有害，因为它羞辱特定个人。"
    check(raw, HarmLabel.HARMFUL, raw, ParseStatus.RECOVERED)


def test_parse_recovered_freeform_with_marker():
    check(
        "我认为无害。理由：只是玩笑",
        HarmLabel.NON_HARMFUL, "只是玩笑", ParseStatus.RECOVERED,
    )


def test_parse_recovered_ambiguous_answer_line_global_rescue():
    d = parse_decision("Answer: unclear\n这是无害的玩笑")
    assert d.label is HarmLabel.NON_HARMFUL
    assert d.parse_status is ParseStatus.RECOVERED


def test_parse_fallback_no_label():
    raw = "It depends."
    check(raw, HarmLabel.NON_HARMFUL, raw, ParseStatus.FALLBACK)


def test_parse_fallback_both_labels():
    raw = "Answer: could be harmful or non-harmful"
    d = parse_decision(raw)
    assert d.label is HarmLabel.NON_HARMFUL
    assert d.parse_status is ParseStatus.FALLBACK


def test_parse_fallback_empty():
    d = parse_decision("")
    assert (d.label, d.parse_status) == (HarmLabel.NON_HARMFUL, ParseStatus.FALLBACK)


def test_parse_fullwidth_letters_recovered_via_nfkc():
    # fullwidth "Ａｎｓｗｅｒ" misses the line regex but NFKC catches the label
    d = parse_decision("Ａｎｓｗｅｒ：有害")
    assert d.label is HarmLabel.HARMFUL
    assert d.parse_status is ParseStatus.RECOVERED


def test_render_parse_roundtrip():
    for label, reason in [
        (HarmLabel.HARMFUL, "针对群体的攻击"),
        (HarmLabel.NON_HARMFUL, "harmless self-mockery"),
    ]:
        d = parse_decision(render_decision(
            parse_decision(f"Answer: {'Harmful' if label is HarmLabel.HARMFUL else 'Non-harmful'}\nReason: {reason}")
        ))
        assert (d.label, d.reason, d.parse_status) == (label, reason, ParseStatus.CLEAN)


# --- attribution call -------------------------------------------------------


def test_attribute_scenario_keyed_on_interpretation():
    backend = MockBackend(
        scenarios=[Scenario(match="攻击他人", response="Answer: Harmful\nReason: 针对性侮辱")]
    )
    input = AttributionInput(
        meme=MemeTuple(text="菜狗", description="一只狗"),
        exp_nonharmful="自嘲玩笑",
        exp_harmful="攻击他人",
        knowledge=EMPTY_CONTEXT,
    )
    d = attribute(input, backend)
    assert d.label is HarmLabel.HARMFUL
    assert d.reason == "针对性侮辱"
    assert d.parse_status is ParseStatus.CLEAN


def test_attribute_unscripted_falls_back(bare_backend):
    input = AttributionInput(
        meme=MemeTuple(text="hello", description="a cat"),
        exp_nonharmful="joke",
        exp_harmful="attack",
        knowledge=EMPTY_CONTEXT,
    )
    d = attribute(input, bare_backend)
    assert d.label is HarmLabel.NON_HARMFUL
    assert d.parse_status is ParseStatus.FALLBACK
    assert d.reason.startswith("mock:")


# --- stance generation ------------------------------------------------------


def test_generate_stance_scenarios(mock_backend):
    meme = MemeTuple(text="菜狗", description="一只狗")
    nh = generate_stance(meme, EMPTY_CONTEXT, HarmLabel.NON_HARMFUL, mock_backend)
    h = generate_stance(meme, EMPTY_CONTEXT, HarmLabel.HARMFUL, mock_backend)
    assert nh == "这只是普通的网络自嘲玩笑，没有攻击任何人。"
    assert h == "该表情包借网络梗贬低特定群体，传播歧视情绪。"


def test_generate_stance_budget_truncates():
    long = "x" * 500
    backend = MockBackend(scenarios=[Scenario(match="Write one", response=long)])
    meme = MemeTuple(text="t", description="d")
    out = generate_stance(meme, EMPTY_CONTEXT, HarmLabel.HARMFUL, backend, char_budget=50)
    assert out == "x" * 50


# --- NLL --------------------------------------------------------------------


def test_nll_is_negated_sum():
    tlp = TokenLogProbs(tokens=(("a", -0.25), ("b", -0.5), ("c", -0.125)))
    got = nll(tlp)
    assert got.value == 0.875
    assert got.token_count == 3


def test_nll_single_half_prob():
    tlp = TokenLogProbs(tokens=(("label", math.log(0.5)),))
    assert nll(tlp).value == pytest.approx(0.693147, abs=1e-6)


def test_nll_empty():
    got = nll(TokenLogProbs(tokens=()))
    assert (got.value, got.token_count) == (0.0, 0)


def test_score_completion_mock(bare_backend):
    got = score_completion("p: ", "hello 世界", bare_backend)
    assert got.token_count == 2
    assert got.value >= 0.0
    again = score_completion("p: ", "hello 世界", bare_backend)
    assert got == again
