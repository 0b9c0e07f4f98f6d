"""Debate-style attribution: prompt assembly, decision parsing, NLL scoring.

The model sees both a harmful and a non-harmful interpretation of the meme
next to the retrieved background knowledge and must commit to one label with
a reason. Parsing the reply is a total function: a malformed reply degrades
to a logged fail-open NonHarmful decision instead of raising, while the
retrieval gate upstream stays fail-closed; the asymmetry is deliberate
(a false harmful accusation and a missed piece of context carry different
costs) and parse_status makes every degraded decision auditable.
"""

from __future__ import annotations

import logging
import math
import re
import unicodedata
from dataclasses import dataclass
from enum import Enum

from .dataset import HarmLabel
from .gateway import ChatRequest, ModelBackend, TokenLogProbs
from .pipeline import KnowledgeContext
from .tokens import has_cjk

log = logging.getLogger(__name__)

DEFAULT_STANCE_BUDGET = 120

PROMPT_EN = """You are a meme analysis expert proficient in Chinese internet culture and social psychology.
Given a Chinese meme and two opposing interpretations, decide whether the meme expresses harmful content. Weigh the relative intent of both readings against the background knowledge before deciding.

Input Information:
Meme Image: {image}
Meme Text: {text}
Meme Image Description: {description}
Meme Background Knowledge:
{knowledge}
Non-harmful Interpretation: {exp_nonharmful}
Harmful Interpretation: {exp_harmful}

Output Requirements:
Answer: {{Harmful / Non-harmful}}
Reason: a concise justification for your decision"""

PROMPT_ZH = """你是一位精通中国互联网文化与社会心理学的表情包分析专家。
给定一个中文表情包以及两种对立的解读，请判断该表情包是否表达有害内容。在做出判断前，请结合背景知识权衡两种解读的相对意图。

输入信息：
表情包图片：{image}
表情包文字：{text}
表情包图片描述：{description}
表情包背景知识：
{knowledge}
无害解读：{exp_nonharmful}
有害解读：{exp_harmful}

输出要求：
答案：{{有害 / 无害}}
理由：简要说明你的判断依据"""

NO_KNOWLEDGE_EN = "(none retrieved)"
NO_KNOWLEDGE_ZH = "（未检索到）"
NO_IMAGE_EN = "(not provided)"
NO_IMAGE_ZH = "（未提供）"

STANCE_PROMPT_EN = (
    "You are a meme analysis expert proficient in Chinese internet culture "
    "and social psychology.\n"
    "Meme Text: {text}\n"
    "Meme Image Description: {description}\n"
    "Background Knowledge:\n{knowledge}\n"
    "Write one {stance} interpretation of this meme in a single sentence of "
    "at most {budget} characters. Reply with the interpretation only."
)

_STANCE_WORDS_EN = {HarmLabel.HARMFUL: "harmful", HarmLabel.NON_HARMFUL: "non-harmful"}


@dataclass(frozen=True)
class MemeTuple:
    text: str
    description: str
    image: str | None = None

    def __post_init__(self) -> None:
        if not self.text.strip() and not self.description.strip():
            raise ValueError("meme text and description must not both be empty")


@dataclass(frozen=True)
class AttributionInput:
    meme: MemeTuple
    exp_nonharmful: str
    exp_harmful: str
    knowledge: KnowledgeContext

    def __post_init__(self) -> None:
        if not self.exp_nonharmful.strip() or not self.exp_harmful.strip():
            raise ValueError("both interpretations must be non-empty")


class ParseStatus(Enum):
    CLEAN = "clean"
    RECOVERED = "recovered"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class Decision:
    label: HarmLabel
    reason: str
    raw_response: str
    parse_status: ParseStatus


def choose_language(meme: MemeTuple, language: str = "auto") -> str:
    """'zh' or 'en'; 'auto' picks Chinese for CJK-bearing meme content."""
    if language in ("zh", "en"):
        return language
    return "zh" if has_cjk(meme.text + meme.description) else "en"


def render_knowledge(knowledge: KnowledgeContext, lang: str) -> str:
    """One "term: definition" line per fragment, in context (p_rel) order."""
    if knowledge.is_empty():
        return NO_KNOWLEDGE_ZH if lang == "zh" else NO_KNOWLEDGE_EN
    return "\n".join(
        f"{f.entry.term}: {f.entry.definition}" for f in knowledge.fragments
    )


def build_attribution_prompt(input: AttributionInput, language: str = "auto") -> str:
    """Render the two-stance debate prompt; fixtures pin both languages."""
    lang = choose_language(input.meme, language)
    template = PROMPT_ZH if lang == "zh" else PROMPT_EN
    image = input.meme.image or (NO_IMAGE_ZH if lang == "zh" else NO_IMAGE_EN)
    return template.format(
        image=image,
        text=input.meme.text,
        description=input.meme.description,
        knowledge=render_knowledge(input.knowledge, lang),
        exp_nonharmful=input.exp_nonharmful,
        exp_harmful=input.exp_harmful,
    )


_ANSWER_LINE = re.compile(r"^\s*(?:Answer|答案)\s*[:：]\s*(.*)$", re.IGNORECASE)
_REASON_MARK = re.compile(r"(?:Reason|理由)\s*[:：]\s*", re.IGNORECASE)

_NON_HARMFUL_ALIASES = ("non-harmful", "non harmful", "nonharmful", "无害")
_HARMFUL_ALIASES = ("harmful", "有害")


def _normalize(text: str) -> str:
    return unicodedata.normalize("NFKC", text).casefold()


def _scan_labels(text: str) -> tuple[bool, bool]:
    """(non_harmful_present, harmful_present) on normalized text.

    Non-harmful aliases are removed before the harmful scan because
    "non-harmful" contains "harmful" as a substring.
    """
    norm = _normalize(text)
    non_harmful = any(alias in norm for alias in _NON_HARMFUL_ALIASES)
    for alias in _NON_HARMFUL_ALIASES:
        norm = norm.replace(alias, "")
    harmful = any(alias in norm for alias in _HARMFUL_ALIASES)
    return non_harmful, harmful


def _reason_after(text: str) -> str | None:
    """Text following the first reason marker, or None when absent."""
    match = _REASON_MARK.search(text)
    if match is None:
        return None
    return text[match.end() :].strip()


def parse_decision(response: str) -> Decision:
    """Total parse of a model reply into a Decision.

    Clean: the first answer line names exactly one label and a reason marker
    follows. Recovered: a label is found unambiguously but the shape is off.
    Fallback: no label or both labels; the label is then NonHarmful
    (fail-open) and the reason is the raw reply.
    """
    lines = response.splitlines()
    for i, line in enumerate(lines):
        answer = _ANSWER_LINE.match(line)
        if answer is None:
            continue
        non_harmful, harmful = _scan_labels(line)
        if non_harmful == harmful:
            break
        label = HarmLabel.NON_HARMFUL if non_harmful else HarmLabel.HARMFUL
        tail = answer.group(1)
        remainder = "\n".join([tail, *lines[i + 1 :]])
        reason = _reason_after(remainder)
        if reason is not None and reason:
            return Decision(label, reason, response, ParseStatus.CLEAN)
        leftover = "\n".join(lines[i + 1 :]).strip()
        return Decision(label, leftover or response, response, ParseStatus.RECOVERED)
    non_harmful, harmful = _scan_labels(response)
    if non_harmful != harmful:
        label = HarmLabel.NON_HARMFUL if non_harmful else HarmLabel.HARMFUL
        reason = _reason_after(response)
        return Decision(
            label, reason if reason else response.strip() or response,
            response, ParseStatus.RECOVERED,
        )
    log.warning("unparseable decision; falling back to non-harmful")
    return Decision(HarmLabel.NON_HARMFUL, response, response, ParseStatus.FALLBACK)


def render_decision(decision: Decision) -> str:
    """Canonical serialization; parse_decision recovers label and reason."""
    label = "Harmful" if decision.label is HarmLabel.HARMFUL else "Non-harmful"
    return f"Answer: {label}\nReason: {decision.reason}"


def attribute(
    input: AttributionInput, model: ModelBackend, language: str = "auto"
) -> Decision:
    """Prompt, call, parse. Transport errors surface; parsing never fails.

    The image handle rides along for vision backends; text-only backends
    still see the description slot, which stands in for the image.
    """
    prompt = build_attribution_prompt(input, language)
    response = model.chat(
        ChatRequest(system="", user=prompt, image=input.meme.image, temperature=0.0)
    )
    return parse_decision(response.text)


def generate_stance(
    meme: MemeTuple,
    knowledge: KnowledgeContext,
    stance: HarmLabel,
    model: ModelBackend,
    char_budget: int = DEFAULT_STANCE_BUDGET,
    language: str = "auto",
) -> str:
    """One stance-conditioned interpretation, for memes without gold pairs."""
    lang = choose_language(meme, language)
    prompt = STANCE_PROMPT_EN.format(
        text=meme.text,
        description=meme.description,
        knowledge=render_knowledge(knowledge, lang),
        stance=_STANCE_WORDS_EN[stance],
        budget=char_budget,
    )
    response = model.chat(ChatRequest(system="", user=prompt, temperature=0.0))
    return response.text.strip()[:char_budget]


@dataclass(frozen=True)
class NllScore:
    value: float
    token_count: int


def nll(logprobs: TokenLogProbs) -> NllScore:
    """Negative log-likelihood of a scored completion: -sum of logprobs."""
    return NllScore(
        value=-math.fsum(lp for _, lp in logprobs.tokens),
        token_count=len(logprobs.tokens),
    )


def score_completion(prompt: str, completion: str, model: ModelBackend) -> NllScore:
    """NLL of a fixed completion under the model; label tokens give the
    classification diagnostic, explanation tokens the faithfulness one."""
    return nll(model.token_logprobs(prompt, completion))
