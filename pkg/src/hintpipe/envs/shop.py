"""MiniShop: a deterministic, seeded search/click shopping world.

Each task owns a small product catalog in one category.  The agent searches,
opens a product page, selects options, and buys.  The purchase is scored by
how many required attributes and option selections match, gated by the price
cap; success means a perfect score of 100.

Like MiniHouse, titles, brands, and page furniture are phrased so no
40-character run of the fixed few-shot demonstration can appear in a live
transcript.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

from .types import (
    SHOP_MAX_STEPS,
    EpisodeFinished,
    EpisodeOutcome,
    Observation,
    StepResult,
    TaskSpec,
)

BRANDS = ("Norvia", "Keldane", "Ostrella", "Veyra", "Lumosa", "Tarvik", "Quillon", "Brenmar")

CATEGORY_CONFIG: dict[str, dict] = {
    "beauty": {
        "nouns": ["body lotion", "hair shampoo", "face serum", "hand cream", "bath soap"],
        "options": {
            "scent": ["jasmine", "vanilla", "rosewater", "aloe", "lavender"],
            "size": ["2 ounce", "6 ounce", "12 ounce", "16 ounce"],
        },
        "extras": ["for dry skin", "for oily skin", "fragrance free", "with vitamin e"],
    },
    "electronics": {
        "nouns": ["wireless earbuds", "power bank", "desk webcam", "mini speaker", "usb hub"],
        "options": {
            "color": ["black", "silver", "navy", "graphite"],
            "model": ["compact", "standard", "pro", "travel"],
        },
        "extras": ["with fast charging", "with noise cancelling", "water resistant", "with carrying case"],
    },
    "fashion": {
        "nouns": ["denim jacket", "wool scarf", "canvas sneakers", "rain boots", "cotton hoodie"],
        "options": {
            "size": ["small", "medium", "large", "x-large"],
            "color": ["navy", "beige", "maroon", "olive"],
        },
        "extras": ["machine washable", "with pockets", "slim fit", "double stitched"],
    },
    "food": {
        "nouns": ["trail mix", "green tea", "hot sauce", "granola bars", "dark chocolate"],
        "options": {
            "flavor": ["spicy", "honey", "matcha", "sea salt", "peach"],
            "size": ["8 pack", "12 pack", "24 pack", "single"],
        },
        "extras": ["gluten free", "sugar free", "organic certified", "non gmo"],
    },
    "furniture": {
        "nouns": ["floor lamp", "storage ottoman", "accent chair", "writing desk", "corner bookcase"],
        "options": {
            "color": ["gray", "white", "walnut", "charcoal"],
            "material": ["oak wood", "steel frame", "bamboo", "velvet"],
        },
        "extras": ["easy assembly", "with storage", "mid century style", "space saving"],
    },
}


@dataclass(frozen=True)
class Product:
    code: str
    title: str
    price: float
    options: dict[str, tuple[str, ...]]


@dataclass
class ShopState:
    task: TaskSpec
    catalog: list[Product]
    required_attrs: tuple[str, ...]
    required_options: tuple[tuple[str, str], ...]
    price_cap: float
    page: str = "search"          # search | results | item
    results: list[str] = field(default_factory=list)
    current: str | None = None
    selections: dict[str, str] = field(default_factory=dict)
    purchased: str | None = None
    step_count: int = 0
    done: bool = False
    outcome: EpisodeOutcome | None = None

    def product(self, code: str) -> Product:
        return next(p for p in self.catalog if p.code == code)

    def to_dict(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "catalog": [
                {
                    "code": p.code,
                    "title": p.title,
                    "price": p.price,
                    "options": {k: list(v) for k, v in p.options.items()},
                }
                for p in self.catalog
            ],
            "required_attrs": list(self.required_attrs),
            "required_options": [list(o) for o in self.required_options],
            "price_cap": self.price_cap,
            "page": self.page,
            "results": list(self.results),
            "current": self.current,
            "selections": dict(self.selections),
            "purchased": self.purchased,
            "step_count": self.step_count,
            "done": self.done,
            "outcome": self.outcome.to_dict() if self.outcome else None,
        }


@dataclass(frozen=True)
class _Plan:
    catalog: list[Product]
    required_attrs: tuple[str, ...]
    required_options: tuple[tuple[str, str], ...]
    price_cap: float
    instruction: str


def _pick_values(rng: random.Random, config: dict) -> dict[str, str]:
    return {otype: rng.choice(values) for otype, values in sorted(config["options"].items())}


def _offered(rng: random.Random, config: dict, otype: str, must_have: str | None) -> tuple[str, ...]:
    values = list(config["options"][otype])
    rng.shuffle(values)
    offered = values[:3]
    if must_have is not None and must_have not in offered:
        offered[0] = must_have
    return tuple(sorted(offered))


def _build_plan(category: str, task_seed: int) -> _Plan:
    rng = random.Random(task_seed)
    config = CATEGORY_CONFIG[category]

    noun = rng.choice(config["nouns"])
    extra = rng.choice(config["extras"])
    required_values = _pick_values(rng, config)
    target_price = round(rng.uniform(8.0, 42.0), 2)
    price_cap = round(target_price + rng.uniform(4.0, 15.0), 2)
    if price_cap == 50.0:
        price_cap = 50.5

    codes: set[str] = set()

    def new_code() -> str:
        while True:
            code = f"ITM{rng.randint(0, 99999):05d}"
            if code not in codes:
                codes.add(code)
                return code

    def make_product(
        p_noun: str, p_extra: str, p_values: dict[str, str], price: float, ensure: bool
    ) -> Product:
        brand = rng.choice(BRANDS)
        vals = " ".join(p_values[t] for t in sorted(p_values))
        title = f"{brand} {vals} {p_noun} {p_extra}"
        options = {
            otype: _offered(rng, config, otype, p_values[otype] if ensure else None)
            for otype in sorted(config["options"])
        }
        return Product(code=new_code(), title=title, price=price, options=options)

    target = make_product(noun, extra, required_values, target_price, ensure=True)

    # At least one same-noun distractor precedes the target so a lazy,
    # noun-only search ranks it first; distractors always miss the extra
    # attribute, keeping their best score below the training filter line.
    catalog: list[Product] = []
    n_distractors = rng.randint(1, 2)
    for _ in range(n_distractors):
        d_extra = rng.choice([e for e in config["extras"] if e != extra])
        d_values = _pick_values(rng, config)
        d_price = round(rng.uniform(8.0, price_cap + 10.0), 2)
        catalog.append(make_product(noun, d_extra, d_values, d_price, ensure=False))
    catalog.append(target)
    while len(catalog) < rng.randint(8, 12):
        o_noun = rng.choice([n for n in config["nouns"] if n != noun])
        o_extra = rng.choice(config["extras"])
        o_values = _pick_values(rng, config)
        o_price = round(rng.uniform(8.0, 55.0), 2)
        catalog.append(make_product(o_noun, o_extra, o_values, o_price, ensure=False))

    sizeish = " ".join(required_values[t] for t in sorted(required_values))
    instruction = (
        f"i would like a {sizeish} {noun} {extra}, "
        f"and price lower than {price_cap:.2f} dollars"
    )
    required_options = tuple((t, required_values[t]) for t in sorted(required_values))
    return _Plan(
        catalog=catalog,
        required_attrs=(noun, extra),
        required_options=required_options,
        price_cap=price_cap,
        instruction=instruction,
    )


def instruction_for(category: str, task_seed: int) -> str:
    return _build_plan(category, task_seed).instruction


def reset(task: TaskSpec) -> tuple[ShopState, Observation]:
    plan = _build_plan(task.category, task.seed)
    state = ShopState(
        task=task,
        catalog=plan.catalog,
        required_attrs=plan.required_attrs,
        required_options=plan.required_options,
        price_cap=plan.price_cap,
    )
    text = (
        f"Welcome to the shop. {len(state.catalog)} items are available.\n"
        f"Instruction: {task.instruction}\n"
        "[Search]"
    )
    return state, Observation(text=text, step_index=0)


_SEARCH_RE = re.compile(r"^search\[(.*)\]$")
_CLICK_RE = re.compile(r"^click\[(.*)\]$")


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9][a-z0-9\-]*", text.lower()))


def _results_page(state: ShopState) -> str:
    lines = ["[Back to Search]", f"Results page 1 (total: {len(state.results)})"]
    for code in state.results:
        product = state.product(code)
        lines += [f"[{code}]", product.title, f"${product.price:.2f}"]
    return "\n".join(lines)


def _item_page(state: ShopState) -> str:
    product = state.product(state.current)
    lines = ["[Back to Search]", product.title, f"Price: ${product.price:.2f}"]
    for otype in sorted(product.options):
        vals = " ".join(f"[{v}]" for v in product.options[otype])
        lines.append(f"{otype}: {vals}")
    lines.append("[Buy Now]")
    return "\n".join(lines)


def step(state: ShopState, action: str) -> StepResult:
    if state.done:
        raise EpisodeFinished(f"episode for task {state.task.id} already finished")

    text, valid = _apply(state, action.strip())
    state.step_count += 1

    if state.purchased is not None:
        score = shop_score(state.product(state.purchased), set(state.selections.items()), state)
        state.done = True
        state.outcome = EpisodeOutcome(success=score == 100.0, score=score, steps_used=state.step_count)
    elif state.step_count >= SHOP_MAX_STEPS:
        state.done = True
        state.outcome = EpisodeOutcome(success=False, score=0.0, steps_used=state.step_count)

    obs = Observation(text=text, step_index=state.step_count)
    return StepResult(observation=obs, done=state.done, outcome=state.outcome, action_valid=valid)


def _apply(state: ShopState, action: str) -> tuple[str, bool]:
    m = _SEARCH_RE.match(action)
    if m:
        if state.page == "item":
            return "Invalid action: go back to the search page first.", False
        query = _tokens(m.group(1))
        scored = [
            (len(query & _tokens(p.title)), i, p.code)
            for i, p in enumerate(state.catalog)
        ]
        hits = [(s, i, c) for s, i, c in scored if s > 0]
        hits.sort(key=lambda t: (-t[0], t[1]))
        state.results = [c for _, _, c in hits[:5]]
        state.page = "results"
        state.current = None
        return _results_page(state), True

    m = _CLICK_RE.match(action)
    if not m:
        return "Invalid action: use search[...] or click[...].", False
    button = m.group(1)

    if button == "Back to Search":
        state.page = "search"
        state.current = None
        state.results = []
        return f"Instruction: {state.task.instruction}\n[Search]", True

    if button == "Buy Now":
        if state.page != "item":
            return "Invalid action: no product page is open.", False
        state.purchased = state.current
        return "Your order has been placed.", True

    if state.page == "results" and button in state.results:
        state.current = button
        state.page = "item"
        state.selections = {}
        return _item_page(state), True

    if state.page == "item":
        product = state.product(state.current)
        for otype in sorted(product.options):
            if button in product.options[otype]:
                state.selections[otype] = button
                return f"You have selected {button}.", True

    return f"Invalid action: there is no button {button!r} here.", False


def shop_score(purchased: Product, options_chosen: set[tuple[str, str]], state: ShopState) -> float:
    """Attribute-count score: matched required attributes and option picks
    over the total required, zeroed when the price cap is exceeded."""
    title = purchased.title.lower()
    matched = sum(1 for attr in state.required_attrs if attr.lower() in title)
    matched += sum(1 for opt in state.required_options if opt in options_chosen)
    total = len(state.required_attrs) + len(state.required_options)
    price_ok = 1.0 if purchased.price <= state.price_cap else 0.0
    score = 100.0 * matched / total * price_ok if total else 0.0
    return max(0.0, min(100.0, round(score, 2)))
