"""Stage B: turn failed trajectories into typed, normalized, deduplicated hint banks.

Hints are short imperative rules with brace placeholders, partitioned by the
failing task's category.  Within a partition no pair of hints may reach the
fuzzy-duplicate line: similarity(a, b) = 1 - levenshtein(a, b) / max(|a|, |b|)
must stay below 0.85.  The threshold is read as "similarity >= 0.85 means
duplicate"; a raw edit-count threshold of 0.85 would be meaningless.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .envs.types import HOUSE, EpisodeOutcome, TaskSpec, categories_for
from .llm.backends import Backend, CompletionRequest
from .llm.strictjson import HINTS_SHAPE, ParseFailure, SchemaViolation, parse_strict_json

logger = logging.getLogger(__name__)

MAX_HINT_CHARS = 120
MAX_HINTS_PER_FAILURE = 4
DUPLICATE_SIMILARITY = 0.85
BANK_FORMAT_VERSION = 1

PLACEHOLDER_VOCABULARY = frozenset(
    {"object", "container", "location", "page", "item", "size", "color", "attribute", "material"}
)

_PLACEHOLDER_RE = re.compile(r"\{([^{}]*)\}")
_WS_RE = re.compile(r"\s+")

HOUSE_EXTRACTION_TEMPLATE = """You are diagnosing why a household agent failed and creating runtime HINTS to avoid future failures in similar tasks.

Environment type: {env_type}
Task goal: {goal_txt}

=======
Steps before failure (action → observation):
{failure_trajectory}
=======

Emit STRICT JSON with this schema:
{
  "hints": [
    {
      "env_type": "{env_type}",
      "text": "≤120 chars, imperative advice the agent can follow in future for similar environment types"
    }
  ]
}

Rules:
- Focus on errors that explain THIS failure; provide hints to avoid failures on SIMILAR tasks.
- Make it generally applicable.
- Use placeholders like {object}, {container}, {location}, {page}, {item} instead of numbers/IDs.
- 1-4 high-value hints max. No duplicates. No meta commentary.
- JSON only. No extra text."""

SHOP_EXTRACTION_TEMPLATE = """You are diagnosing why a shopping agent failed and creating runtime HINTS to avoid future failures in purchasing similar items.

Item category: {category}
Task goal: {goal}

=======
Steps before failure (action → observation):
{failure_trajectory}
=======

Emit STRICT JSON with this schema:
{
  "hints": [
    {
      "category": "{category}",
      "text": "≤120 chars, imperative advice the agent can follow in future for similar environment types"
    }
  ]
}

Rules:
- Focus on errors that explain THIS failure; provide hints to avoid failures on SIMILAR tasks.
- Make it generally applicable.
- Use placeholders like {item}, {size}, {color}, {attribute}, {material} instead of names/IDs.
- 1-4 high-value hints max. No duplicates. No meta commentary.
- JSON only. No extra text."""


@dataclass(frozen=True)
class Hint:
    category: str
    text: str
    source_episode: str

    def to_dict(self) -> dict:
        return {"text": self.text, "source_episode": self.source_episode}


@dataclass(frozen=True)
class FailureRecord:
    """A complete failure example: goal, transcript, and failed outcome."""

    task: TaskSpec
    goal_text: str
    steps: tuple[tuple[str, str], ...]
    outcome: EpisodeOutcome

    def __post_init__(self) -> None:
        if self.outcome.success:
            raise ValueError("FailureRecord requires a failed outcome")


@dataclass
class HintBank:
    env_kind: str
    partitions: dict[str, list[Hint]]
    provenance: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, env_kind: str, provenance: dict | None = None) -> "HintBank":
        return cls(
            env_kind=env_kind,
            partitions={c: [] for c in categories_for(env_kind)},
            provenance=provenance or {},
        )

    def size(self) -> int:
        return sum(len(hints) for hints in self.partitions.values())


def validate_hint_text(text: str) -> None:
    if not text:
        raise ValueError("hint text must be non-empty")
    if len(text) > MAX_HINT_CHARS:
        raise ValueError(f"hint text exceeds {MAX_HINT_CHARS} chars: {text[:40]!r}...")
    for slot in _PLACEHOLDER_RE.findall(text):
        if slot not in PLACEHOLDER_VOCABULARY:
            raise ValueError(f"unknown placeholder {{{slot}}} in hint {text!r}")


def normalize(text: str) -> str:
    """Trim, collapse whitespace runs, strip trailing periods, and lowercase
    placeholder tokens inside braces. All other casing is preserved.
    Idempotent by construction (loops to a fixpoint)."""
    result = _WS_RE.sub(" ", text).strip()
    result = _PLACEHOLDER_RE.sub(lambda m: "{" + m.group(1).lower() + "}", result)
    while True:
        trimmed = result.rstrip(".").strip()
        if trimmed == result:
            return result
        result = trimmed


def levenshtein(a: str, b: str) -> int:
    """Character-level edit distance, two-row dynamic program."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def similarity(a: str, b: str) -> float:
    """1 - edit_distance / max(len); 1.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def _is_near_duplicate(candidate: str, existing: list[Hint]) -> bool:
    for hint in existing:
        # Length gap alone can rule a pair out: distance >= |len(a) - len(b)|.
        longest = max(len(candidate), len(hint.text))
        if longest and abs(len(candidate) - len(hint.text)) / longest > 1 - DUPLICATE_SIMILARITY:
            continue
        if similarity(candidate, hint.text) >= DUPLICATE_SIMILARITY:
            return True
    return False


def dedup_insert(bank: HintBank, hint: Hint) -> HintBank:
    """Insert unless a same-partition near-duplicate exists (first kept wins).
    The same text may live in several categories."""
    if hint.category not in bank.partitions:
        raise ValueError(f"unknown category {hint.category!r} for env {bank.env_kind!r}")
    validate_hint_text(hint.text)
    partition = bank.partitions[hint.category]
    if not _is_near_duplicate(hint.text, partition):
        partition.append(hint)
    return bank


def render_failure_trajectory(failure: FailureRecord) -> str:
    return "\n".join(f"- {action} → {observation}" for action, observation in failure.steps)


def build_extraction_prompt(failure: FailureRecord) -> str:
    trajectory = render_failure_trajectory(failure)
    if failure.task.env_kind == HOUSE:
        prompt = HOUSE_EXTRACTION_TEMPLATE
        prompt = prompt.replace("{env_type}", failure.task.category)
        prompt = prompt.replace("{goal_txt}", failure.goal_text)
    else:
        prompt = SHOP_EXTRACTION_TEMPLATE
        prompt = prompt.replace("{category}", failure.task.category)
        prompt = prompt.replace("{goal}", failure.goal_text)
    return prompt.replace("{failure_trajectory}", trajectory)


def extract_hints(failure: FailureRecord, backend: Backend, max_tokens: int = 512) -> list[Hint]:
    """Generate 1-4 imperative hints for one failure via the backend.

    The strict-JSON reply gets one retry; a second schema failure skips the
    episode (logged) and returns no hints so the pipeline keeps moving.
    """
    prompt = build_extraction_prompt(failure)
    request = CompletionRequest(
        messages=(("user", prompt),),
        max_tokens=max_tokens,
        temperature=0.0,
        tag="hint_extraction",
    )
    parsed = None
    for attempt in (1, 2):
        reply = backend.complete(request)
        try:
            parsed = parse_strict_json(reply.text, HINTS_SHAPE)
            break
        except (ParseFailure, SchemaViolation) as exc:
            logger.warning(
                "hint extraction reply rejected for %s (attempt %d): %s",
                failure.task.id, attempt, exc,
            )
    if parsed is None:
        logger.warning("skipping failure %s: no parseable hints", failure.task.id)
        return []

    raw_items = parsed["hints"]
    if len(raw_items) > MAX_HINTS_PER_FAILURE:
        logger.warning(
            "backend returned %d hints for %s; truncating to %d",
            len(raw_items), failure.task.id, MAX_HINTS_PER_FAILURE,
        )
        raw_items = raw_items[:MAX_HINTS_PER_FAILURE]

    hints: list[Hint] = []
    for item in raw_items:
        text = item.get("text")
        if not isinstance(text, str) or not text.strip():
            logger.warning("dropping malformed hint entry for %s", failure.task.id)
            continue
        if len(text) > MAX_HINT_CHARS:
            logger.warning("dropping over-length hint for %s: %r", failure.task.id, text[:40])
            continue
        hints.append(Hint(category=failure.task.category, text=text, source_episode=failure.task.id))
    return hints


def build_bank(failures: list[FailureRecord], backend: Backend, env_kind: str) -> HintBank:
    """Extract, normalize, and dedup-insert hints from every failure, in order."""
    bank = HintBank.empty(
        env_kind,
        provenance={"backend": backend.kind, "failures": len(failures)},
    )
    for failure in failures:
        for hint in extract_hints(failure, backend):
            normalized = Hint(
                category=hint.category,
                text=normalize(hint.text),
                source_episode=hint.source_episode,
            )
            dedup_insert(bank, normalized)
    return bank


def save_bank(bank: HintBank, path: str) -> None:
    validate_bank(bank)
    payload = {
        "version": BANK_FORMAT_VERSION,
        "env_kind": bank.env_kind,
        "partitions": {
            category: [hint.to_dict() for hint in hints]
            for category, hints in bank.partitions.items()
        },
        "provenance": bank.provenance,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bank(path: str) -> HintBank:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != BANK_FORMAT_VERSION:
        raise ValueError(f"unsupported bank version: {payload.get('version')!r}")
    env_kind = payload["env_kind"]
    bank = HintBank.empty(env_kind, provenance=payload.get("provenance", {}))
    for category, items in payload["partitions"].items():
        if category not in bank.partitions:
            raise ValueError(f"unknown category {category!r} in bank file")
        bank.partitions[category] = [
            Hint(category=category, text=item["text"], source_episode=item.get("source_episode", ""))
            for item in items
        ]
    validate_bank(bank)
    return bank


def validate_bank(bank: HintBank) -> None:
    """Re-check every invariant: category set, hint shape, and the pairwise
    0.85 ceiling within each partition."""
    expected = set(categories_for(bank.env_kind))
    if set(bank.partitions) != expected:
        raise ValueError("bank partitions do not match the environment's category set")
    for category, hints in bank.partitions.items():
        for hint in hints:
            if hint.category != category:
                raise ValueError(f"hint filed under {category!r} claims {hint.category!r}")
            validate_hint_text(hint.text)
        for i in range(len(hints)):
            for j in range(i + 1, len(hints)):
                sim = similarity(hints[i].text, hints[j].text)
                if sim >= DUPLICATE_SIMILARITY:
                    raise ValueError(
                        f"near-duplicate pair in {category!r} "
                        f"(similarity {sim:.3f}): {hints[i].text!r} / {hints[j].text!r}"
                    )
