"""Multi-model geographic inference over augmented clue texts.

Each clue is pushed through a three-prompt chain (entity extraction,
contextual verification, ambiguity inference) per model; the final
response is parsed into level/entity/confidence candidates and the
models' votes are combined by a weighted argmax per hierarchy level.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .augment import Augmentation
from .cluemine import ClueRecord

__all__ = [
    "LEVELS",
    "PromptBundle",
    "GeoCandidate",
    "EnsembleResult",
    "ModelClient",
    "FixtureTransport",
    "HttpChatTransport",
    "NullTransport",
    "canonicalize_entity",
    "render_prompts",
    "parse_candidates",
    "aggregate_weighted",
    "run_ensemble",
    "load_roster",
    "default_roster",
]

LEVELS = ("country", "city", "street")

ENTITY_PROMPT = (
    "Please analyze whether the following text contains geographic location "
    "information and extract specific geographic location names."
)
VERIFICATION_PROMPT = (
    "Please determine whether the extracted geographic location information "
    "is accurate based on the context and add relevant details."
)
INFERENCE_PROMPT = (
    "If there is ambiguous geographic location information in the text, "
    "please infer its possible meaning and provide reasoning results."
)

FORMAT_SUFFIX = (
    "Answer with one line per geographic location in the form:\n"
    "LEVEL | ENTITY | CONFIDENCE\n"
    "where LEVEL is one of country, city, street and CONFIDENCE is a number "
    "between 0 and 1. If the text contains no location, answer: none"
)

DEFAULT_PROMPT_BUDGET = 4000  # chars; snippets are truncated from the tail

_WS_RUN = re.compile(r"\s+")
_TRAILING_PUNCT = re.compile(r"[\s.,;:!?'\"()\[\]{}]+$")

_CANDIDATE_LINE = re.compile(
    r"^\s*(country|city|street)\s*\|\s*(.+?)\s*\|\s*([-+0-9.eE]+)\s*$",
    re.IGNORECASE,
)


def canonicalize_entity(entity: str) -> str:
    """Lowercase, collapse whitespace, strip trailing punctuation."""
    s = _WS_RUN.sub(" ", entity.strip().lower())
    return _TRAILING_PUNCT.sub("", s)


@dataclass
class PromptBundle:
    entity_prompt: str
    verification_prompt: str
    inference_prompt: str

    @property
    def prompts(self) -> tuple[str, str, str]:
        return (self.entity_prompt, self.verification_prompt, self.inference_prompt)


@dataclass(frozen=True)
class GeoCandidate:
    entity: str  # canonical form
    level: str
    confidence: float
    model_id: str


@dataclass
class EnsembleResult:
    """Winner at one hierarchy level (or an abstention)."""

    level: str
    entity: str | None
    score: float
    per_model: list[GeoCandidate] = field(default_factory=list)
    abstained: bool = False


def _context_block(clue_text: str, aug: Augmentation | None, budget: int) -> str:
    head = f"Text: {clue_text}"
    if aug is None or not aug.snippets:
        return head
    lines = [f"{i}. {s.title}: {s.snippet}" for i, s in enumerate(aug.snippets, 1)]
    # enforce the budget by trimming from the last snippet backwards;
    # the clue text itself is never touched
    while lines:
        block = head + "\n\nSearch results:\n" + "\n".join(lines)
        if len(block) <= budget:
            return block
        overshoot = len(block) - budget
        if len(lines[-1]) > overshoot:
            lines[-1] = lines[-1][: len(lines[-1]) - overshoot].rstrip()
        else:
            lines.pop()
    return head


def render_prompts(
    clue: ClueRecord,
    aug: Augmentation | None = None,
    budget: int = DEFAULT_PROMPT_BUDGET,
) -> PromptBundle:
    """Build the three-chain prompts for a clue.

    Each prompt is its template plus the response-format suffix, followed
    by the context block (raw clue text, then numbered snippets when the
    clue was augmented).
    """
    if not clue.text:
        raise ValueError("cannot render prompts for an empty clue text")
    context_budget = budget - max(
        len(t) + len(FORMAT_SUFFIX) + 4
        for t in (ENTITY_PROMPT, VERIFICATION_PROMPT, INFERENCE_PROMPT)
    )
    context = _context_block(clue.text, aug, context_budget)

    def build(template: str) -> str:
        return f"{template}\n\n{FORMAT_SUFFIX}\n\n{context}"

    return PromptBundle(
        entity_prompt=build(ENTITY_PROMPT),
        verification_prompt=build(VERIFICATION_PROMPT),
        inference_prompt=build(INFERENCE_PROMPT),
    )


def parse_candidates(raw_response: str, model_id: str) -> list[GeoCandidate]:
    """Parse `LEVEL | ENTITY | CONFIDENCE` lines into candidates.

    Malformed lines are data, not faults: they are skipped. Out-of-range
    confidences are clamped into [0, 1].
    """
    candidates: list[GeoCandidate] = []
    for line in raw_response.splitlines():
        m = _CANDIDATE_LINE.match(line)
        if not m:
            continue
        entity = canonicalize_entity(m.group(2))
        if not entity:
            continue
        try:
            confidence = float(m.group(3))
        except ValueError:
            continue
        confidence = min(1.0, max(0.0, confidence))
        candidates.append(GeoCandidate(
            entity=entity,
            level=m.group(1).lower(),
            confidence=confidence,
            model_id=model_id,
        ))
    return candidates


def aggregate_weighted(
    candidates: list[GeoCandidate],
    weights: dict[str, float],
) -> dict[str, EnsembleResult]:
    """Weighted-argmax winner per hierarchy level.

    score(entity) = sum over models of weight * confidence; a model
    naming the same (level, entity) twice contributes only its highest
    confidence. Ties break on the higher best single-model confidence,
    then lexicographically on entity. Levels with no candidates abstain.
    """
    results: dict[str, EnsembleResult] = {}
    for level in LEVELS:
        at_level = [c for c in candidates if c.level == level]
        if not at_level:
            results[level] = EnsembleResult(
                level=level, entity=None, score=0.0, abstained=True,
            )
            continue
        # model-level dedup: keep max confidence per (model, entity)
        best: dict[tuple[str, str], GeoCandidate] = {}
        for c in at_level:
            key = (c.model_id, c.entity)
            if key not in best or c.confidence > best[key].confidence:
                best[key] = c
        scores: dict[str, float] = {}
        max_conf: dict[str, float] = {}
        for c in best.values():
            w = weights.get(c.model_id, 1.0)
            scores[c.entity] = scores.get(c.entity, 0.0) + w * c.confidence
            max_conf[c.entity] = max(max_conf.get(c.entity, 0.0), c.confidence)
        winner = min(
            scores,
            key=lambda e: (-scores[e], -max_conf[e], e),
        )
        results[level] = EnsembleResult(
            level=level,
            entity=winner,
            score=scores[winner],
            per_model=sorted(
                best.values(), key=lambda c: (c.model_id, c.entity),
            ),
            abstained=False,
        )
    return results


class ModelTransport:
    """Contract: given the running chat messages, return the reply text."""

    def complete(self, messages: list[dict]) -> str:
        raise NotImplementedError


class FixtureTransport(ModelTransport):
    """Offline transport: JSON map sha256(prompt text) -> response string."""

    def __init__(self, path: str | Path):
        with open(path, encoding="utf-8") as fh:
            self._table: dict[str, str] = json.load(fh)
        self.calls = 0

    def complete(self, messages: list[dict]) -> str:
        self.calls += 1
        prompt = messages[-1]["content"]
        key = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        return self._table.get(key, "")


class HttpChatTransport(ModelTransport):
    """Generic chat-completion HTTP client (OpenAI-style request body)."""

    def __init__(self, endpoint: str, model_id: str, api_key_env: str | None = None,
                 timeout: float = 60.0):
        self.endpoint = endpoint
        self.model_id = model_id
        self.timeout = timeout
        env = api_key_env or re.sub(r"[^0-9A-Za-z]", "_", model_id).upper() + "_API_KEY"
        self.api_key = os.environ.get(env, "")

    def complete(self, messages: list[dict]) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            self.endpoint,
            json={"model": self.model_id, "messages": messages},
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        body = resp.json()
        return body["choices"][0]["message"]["content"]


class NullTransport(ModelTransport):
    """Never answers; clues through it produce no candidates."""

    def complete(self, messages: list[dict]) -> str:
        return ""


@dataclass
class ModelClient:
    model_id: str
    weight: float
    transport: ModelTransport

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError(f"model weight must be positive, got {self.weight}")

    def run_chain(self, bundle: PromptBundle) -> str:
        """Run the three prompts as one conversation; return the final reply."""
        messages: list[dict] = []
        reply = ""
        for prompt in bundle.prompts:
            messages.append({"role": "user", "content": prompt})
            reply = self.transport.complete(messages)
            messages.append({"role": "assistant", "content": reply})
        return reply


def run_ensemble(
    clue: ClueRecord,
    aug: Augmentation | None,
    models: list[ModelClient],
    budget: int = DEFAULT_PROMPT_BUDGET,
) -> tuple[dict[str, EnsembleResult], list[GeoCandidate]]:
    """Query every model on one clue and aggregate the candidates."""
    bundle = render_prompts(clue, aug, budget=budget)
    candidates: list[GeoCandidate] = []
    for model in models:
        final = model.run_chain(bundle)
        candidates.extend(parse_candidates(final, model.model_id))
    weights = {m.model_id: m.weight for m in models}
    return aggregate_weighted(candidates, weights), candidates


def default_roster() -> list[dict]:
    """Roster skeleton with the default weight scheme.

    Online-class models carry weight 2.0, the designated best offline
    model 1.5, remaining offline models 1.0. Transports default to null
    until configured.
    """
    return [
        {"model_id": "chatgpt-4o", "weight": 2.0, "transport": "null"},
        {"model_id": "claude-3.7", "weight": 2.0, "transport": "null"},
        {"model_id": "llama3.1-8b", "weight": 1.5, "transport": "null"},
        {"model_id": "mistral-7b", "weight": 1.0, "transport": "null"},
        {"model_id": "glm4-9b", "weight": 1.0, "transport": "null"},
        {"model_id": "gemma2-9b", "weight": 1.0, "transport": "null"},
    ]


def load_roster(entries: list[dict], base_dir: str | Path = ".") -> list[ModelClient]:
    """Instantiate ModelClients from roster config entries.

    Entry fields: model_id, weight, transport (fixture|http|null), plus
    fixture_path for fixture transports and endpoint / api_key_env for
    http transports. Relative fixture paths resolve against *base_dir*.
    """
    base = Path(base_dir)
    clients: list[ModelClient] = []
    for entry in entries:
        kind = entry.get("transport", "null")
        if kind == "fixture":
            fixture = Path(entry["fixture_path"])
            if not fixture.is_absolute():
                fixture = base / fixture
            transport: ModelTransport = FixtureTransport(fixture)
        elif kind == "http":
            transport = HttpChatTransport(
                endpoint=entry["endpoint"],
                model_id=entry["model_id"],
                api_key_env=entry.get("api_key_env"),
            )
        elif kind == "null":
            transport = NullTransport()
        else:
            raise ValueError(f"unknown model transport {kind!r}")
        clients.append(ModelClient(
            model_id=entry["model_id"],
            weight=float(entry["weight"]),
            transport=transport,
        ))
    return clients
