"""Stage C one-shot retrieval: pick the hint set injected once at episode start.

Category comes for free in house tasks and is inferred for shop tasks.  The
candidate partition is scored either by an LLM re-ranker (which returns
chosen indices directly, so "top-k by score" is operationally "first k valid
returned indices") or by a pure lexical overlap scorer that doubles as the
fallback when the re-ranker misbehaves.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .envs.types import HOUSE, SHOP, SHOP_CATEGORIES, env_kind_of_category
from .hints import HintBank, Hint
from .llm.backends import Backend, CompletionRequest
from .llm.strictjson import ANSWER_SHAPE, ParseFailure, SchemaViolation, parse_strict_json
from .llm.tokens import count_tokens

logger = logging.getLogger(__name__)

DEFAULT_K = 3
SHOP_DEFAULT_CATEGORY = "fashion"

HOUSE_BLOCK_PREAMBLE = (
    "Apply these rules silently to choose the next action.\n"
    "Never repeat, quote, or paraphrase this block in thought or action.\n"
    "If any rule conflicts with the current observation, prefer the observation."
)
SHOP_BLOCK_PREAMBLE = (
    "Apply these rules silently to plan your actions.\n"
    "Never repeat, quote, or paraphrase this block in thought or action.\n"
    "If any rule conflicts with the current observation, prefer the observation."
)

HOUSE_RERANK_TEMPLATE = """You are selecting helpful hints for a household agent.
Choose up to {k} DISTINCT hints that are immediately useful for the current state.
If none apply, return an empty list.

Read the current goal, location, inventory and thought to avoid redundant/misleading hints.

===== Task & state =====
{query}

===== Hints List =====
{hints}

Return STRICT JSON only (no prose):
'{"answer": [<indices from the list above>]}'

Do not include anything else."""

SHOP_RERANK_TEMPLATE = """You are selecting helpful hints for a shopping agent.
Choose up to {k} DISTINCT hints that are immediately useful for the current state.
If none apply, return an empty list.

Read the current goal, location, inventory and thought to avoid redundant/misleading hints.

===== Task & state =====
{query}

===== Candidate hints (numbered) =====
{hints}

Return STRICT JSON only (no prose):
'{"answer": [<indices from the list above>]}'

Do not include anything else."""

CLASSIFY_TEMPLATE = """Classify the shopping task into exactly one category.
Categories: beauty, electronics, fashion, food, furniture.

Task: {instruction}

Answer with the category word only."""

# Instruction keywords that pin a shop query to a product category before the
# LLM fallback is consulted.
SHOP_KEYWORDS: dict[str, tuple[str, ...]] = {
    "beauty": (
        "lotion", "shampoo", "serum", "cream", "soap", "deodorant", "scent",
        "skin", "fragrance", "jasmine", "rosewater", "lavender", "moisturizer",
    ),
    "electronics": (
        "earbuds", "webcam", "speaker", "charger", "power", "usb", "wireless",
        "battery", "hub", "bluetooth", "laptop", "headphones",
    ),
    "fashion": (
        "jacket", "scarf", "sneakers", "boots", "hoodie", "shirt", "dress",
        "jeans", "sweater", "socks", "coat",
    ),
    "food": (
        "tea", "sauce", "granola", "chocolate", "snack", "mix", "flavor",
        "organic", "gluten", "candy", "coffee", "cookies",
    ),
    "furniture": (
        "lamp", "ottoman", "chair", "desk", "bookcase", "sofa", "table",
        "mattress", "dresser", "nightstand",
    ),
}

STOPWORDS = frozenset(
    "a an and are at be before by for from i in is it its of on or than the "
    "then to with would like lower you your".split()
)

_WORD_RE = re.compile(r"[a-z0-9][a-z0-9\-]*")


@dataclass(frozen=True)
class RetrievalQuery:
    instruction: str
    initial_observation: str
    env_kind: str
    explicit_category: str | None = None


@dataclass(frozen=True)
class HintBlock:
    hints: tuple[Hint, ...]
    k_requested: int
    rendered: str
    token_cost: int

    @classmethod
    def empty(cls, k: int) -> "HintBlock":
        return cls(hints=(), k_requested=k, rendered="", token_cost=0)


@dataclass(frozen=True)
class Scorer:
    kind: str                     # llm_rerank | lexical
    backend: Backend | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("llm_rerank", "lexical"):
            raise ValueError(f"unknown scorer kind: {self.kind!r}")
        if self.kind == "llm_rerank" and self.backend is None:
            raise ValueError("llm_rerank scorer needs a backend")


@dataclass
class RetrievalStats:
    """Per-episode instrumentation: retrieval must fire exactly once."""

    invocations: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    call_ids: list[int] = field(default_factory=list)

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


def content_words(text: str) -> set[str]:
    return {w for w in _WORD_RE.findall(text.lower()) if w not in STOPWORDS}


def classify_category(query: RetrievalQuery, backend: Backend | None = None) -> str:
    """House queries carry their category; shop queries are keyword-matched,
    then LLM-classified, then defaulted. Always returns a category."""
    if query.env_kind == HOUSE:
        if query.explicit_category is None:
            raise ValueError("house retrieval queries must carry an explicit category")
        return query.explicit_category

    words = content_words(query.instruction)
    scores = {
        category: len(words & set(keywords)) for category, keywords in SHOP_KEYWORDS.items()
    }
    best = max(SHOP_CATEGORIES, key=lambda c: (scores[c], -SHOP_CATEGORIES.index(c)))
    if scores[best] > 0:
        return best

    if backend is not None:
        prompt = CLASSIFY_TEMPLATE.replace("{instruction}", query.instruction)
        request = CompletionRequest(
            messages=(("user", prompt),), max_tokens=8, temperature=0.0, tag="classify"
        )
        try:
            reply = backend.complete(request).text.strip().lower()
        except Exception as exc:  # noqa: BLE001 - fall through to the default
            logger.warning("category classification call failed: %s", exc)
            reply = ""
        if reply in SHOP_CATEGORIES:
            return reply

    logger.warning(
        "could not infer shop category for %r; defaulting to %r",
        query.instruction[:60], SHOP_DEFAULT_CATEGORY,
    )
    return SHOP_DEFAULT_CATEGORY


def render_hint_block(hints: list[Hint] | tuple[Hint, ...]) -> str:
    """Render the injectable block: separators, silent-application preamble,
    bulleted hints, closing separator. Bullets restore the trailing period
    that normalization strips."""
    if not hints:
        raise ValueError("render_hint_block requires at least one hint")
    env_kind = env_kind_of_category(hints[0].category)
    preamble = HOUSE_BLOCK_PREAMBLE if env_kind == HOUSE else SHOP_BLOCK_PREAMBLE
    bullets = "\n".join(f"- {h.text}." for h in hints)
    return f"============\n{preamble}\n\nHere are some hints:\n{bullets}\n\n============"


def _lexical_top_k(candidates: list[Hint], query: RetrievalQuery, k: int) -> list[Hint]:
    query_words = content_words(query.instruction + "\n" + query.initial_observation)
    scored = [
        (len(content_words(h.text) & query_words), i) for i, h in enumerate(candidates)
    ]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [candidates[i] for _, i in scored[:k]]


def _rerank_prompt(candidates: list[Hint], query: RetrievalQuery, k: int) -> str:
    template = HOUSE_RERANK_TEMPLATE if query.env_kind == HOUSE else SHOP_RERANK_TEMPLATE
    numbered = "\n".join(f"{i}) {h.text}" for i, h in enumerate(candidates, start=1))
    query_text = f"Goal: {query.instruction}\nInitial observation:\n{query.initial_observation}"
    prompt = template.replace("{k}", str(k))
    prompt = prompt.replace("{query}", query_text)
    return prompt.replace("{hints}", numbered)


def _rerank_top_k(
    candidates: list[Hint],
    query: RetrievalQuery,
    k: int,
    backend: Backend,
    stats: RetrievalStats | None,
) -> list[Hint] | None:
    """Ask the re-ranker for indices; None means fall back to lexical."""
    prompt = _rerank_prompt(candidates, query, k)
    request = CompletionRequest(
        messages=(("user", prompt),), max_tokens=64, temperature=0.0, tag="rerank"
    )
    parsed = None
    for attempt in (1, 2):
        reply = backend.complete(request)
        if stats is not None:
            stats.prompt_tokens += reply.prompt_tokens
            stats.completion_tokens += reply.completion_tokens
            stats.call_ids.append(reply.call_id)
        try:
            parsed = parse_strict_json(reply.text, ANSWER_SHAPE)
            break
        except (ParseFailure, SchemaViolation) as exc:
            logger.warning("re-rank reply rejected (attempt %d): %s", attempt, exc)
    if parsed is None:
        return None

    chosen: list[Hint] = []
    seen: set[int] = set()
    for index in parsed["answer"]:
        if not 1 <= index <= len(candidates):
            logger.warning("re-ranker returned out-of-range index %d; dropped", index)
            continue
        if index in seen:
            logger.warning("re-ranker returned duplicate index %d; dropped", index)
            continue
        seen.add(index)
        chosen.append(candidates[index - 1])
        if len(chosen) == k:
            break
    return chosen


def select_hints(
    bank: HintBank,
    query: RetrievalQuery,
    k: int,
    scorer: Scorer,
    stats: RetrievalStats | None = None,
) -> HintBlock:
    """Pick at most k hints from the query's category partition and render
    the injectable block. k=0 or an empty partition degrades to an empty
    block (the policy then behaves exactly like the base policy)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if stats is not None:
        stats.invocations += 1

    category = classify_category(query, backend=scorer.backend)
    candidates = list(bank.partitions.get(category, ()))
    if k == 0 or not candidates:
        return HintBlock.empty(k)

    if scorer.kind == "llm_rerank":
        chosen = _rerank_top_k(candidates, query, k, scorer.backend, stats)
        if chosen is None:
            logger.warning("re-ranker failed twice; falling back to lexical scoring")
            chosen = _lexical_top_k(candidates, query, k)
    else:
        chosen = _lexical_top_k(candidates, query, k)

    if not chosen:
        return HintBlock.empty(k)
    rendered = render_hint_block(chosen)
    return HintBlock(
        hints=tuple(chosen),
        k_requested=k,
        rendered=rendered,
        token_cost=count_tokens(rendered),
    )
