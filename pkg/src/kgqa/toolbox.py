"""The four agent-facing tools: SearchNodes, SearchGraphPattern, ExecuteSPARQL,
AskForClarification.

Each tool returns a ToolResult carrying the observation text the agent sees
plus structured candidates for the ambiguity plugin. ExecuteSPARQL never
raises: failures become "Error: ..." observations so the agent can
self-correct.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Protocol

from . import sparql
from .errors import KgqaError
from .kg import EntityRecord, KnowledgeGraph, Literal, term_string

DESCRIPTION_CHARS = 200
MAX_RESULT_ROWS = 50

TOOL_NAMES = ("SearchNodes", "SearchGraphPattern", "ExecuteSPARQL", "AskForClarification")


@dataclass(frozen=True)
class EntityCandidate:
    record: EntityRecord
    match_score: float


@dataclass(frozen=True)
class PredicateCandidate:
    predicate: str
    sample_tail: "str | Literal"
    semantic_score: float
    anchor: str


@dataclass(frozen=True)
class ToolResult:
    observation_text: str
    entity_candidates: tuple[EntityCandidate, ...] | None = None
    predicate_candidates: tuple[PredicateCandidate, ...] | None = None
    suspended: bool = False

    def __post_init__(self):
        if not self.observation_text:
            raise ValueError("observation_text must be non-empty")
        if self.suspended and (self.entity_candidates is not None
                               or self.predicate_candidates is not None):
            raise ValueError("suspended results carry no candidates")


class SemanticScorer(Protocol):
    """Ranks a predicate id against the caller's semantic description."""

    def score(self, semantic: str, predicate: str) -> float: ...


def predicate_tokens(predicate: str) -> set[str]:
    """Tokens of the final dotted segment(s); composite ids contribute both hops."""
    tokens: set[str] = set()
    for part in predicate.split(" / "):
        segment = part.rsplit(".", 1)[-1]
        tokens.update(tok for tok in re.split(r"[._]+", segment.lower()) if tok)
    return tokens


class JaccardScorer:
    """Default lexical scorer: token-overlap Jaccard, no model dependency."""

    def score(self, semantic: str, predicate: str) -> float:
        sem_tokens = {tok for tok in re.split(r"[^a-z0-9]+", semantic.lower()) if tok}
        pred_tokens = predicate_tokens(predicate)
        union = sem_tokens | pred_tokens
        if not union:
            return 0.0
        return len(sem_tokens & pred_tokens) / len(union)


def search_nodes(graph: KnowledgeGraph, name: str, k: int = 10) -> ToolResult:
    """Entity linking by surface name; observation lists name, id, description, types."""
    scored = graph.find_entities_scored(name, k)
    if not scored:
        return ToolResult("No nodes found.")
    lines = []
    candidates = []
    for rec, score in scored:
        lines.append(f'"{rec.canonical_name}" ({rec.id})'
                     f" | description: {rec.description[:DESCRIPTION_CHARS]}"
                     f" | types: {', '.join(rec.types)}")
        candidates.append(EntityCandidate(record=rec, match_score=score))
    return ToolResult("\n".join(lines), entity_candidates=tuple(candidates))


def _anchor_entities(table: sparql.ResultTable) -> list[str]:
    anchors: list[str] = []
    seen: set[str] = set()
    for row in table.rows:
        for value in row:
            if isinstance(value, str) and value not in seen:
                seen.add(value)
                anchors.append(value)
    return anchors


def search_graph_pattern(graph: KnowledgeGraph, sparql_text: str, semantic: str,
                         k: int = 10, scorer: SemanticScorer | None = None) -> ToolResult:
    """One-hop predicates around the anchor entities the query binds.

    Neighbors flagged as CVT nodes are expanded one further hop and reported
    as composite `p1 / p2` candidates instead of an opaque mediator id. Each
    predicate appears once, with the lexicographically smallest tail as its
    deterministic sample, ranked by semantic score (ties lexicographic).
    """
    scorer = scorer or JaccardScorer()
    try:
        ast = sparql.parse(sparql_text)
        table = sparql.execute(ast, graph)
    except KgqaError as exc:
        return ToolResult(f"Error: {exc}")
    anchors = _anchor_entities(table)
    if not anchors:
        return ToolResult("No matching anchor entities.")

    # predicate id -> (smallest tail, its anchor)
    collected: dict[str, tuple[str | Literal, str]] = {}

    def offer(pred: str, tail, anchor: str):
        if pred not in collected or term_string(tail) < term_string(collected[pred][0]):
            collected[pred] = (tail, anchor)

    for anchor in anchors:
        for pred, nb in graph.neighbors(anchor, "both"):
            if isinstance(nb, str) and graph.entities[nb].is_cvt:
                for pred2, nb2 in graph.neighbors(nb, "both"):
                    if isinstance(nb2, str) and nb2 == anchor:
                        continue
                    offer(f"{pred} / {pred2}", nb2, anchor)
            else:
                offer(pred, nb, anchor)

    if not collected:
        return ToolResult("No predicates found.")
    candidates = [
        PredicateCandidate(predicate=pred, sample_tail=tail,
                           semantic_score=scorer.score(semantic, pred), anchor=anchor)
        for pred, (tail, anchor) in collected.items()
    ]
    candidates.sort(key=lambda c: (-c.semantic_score, c.predicate))
    candidates = candidates[:k]
    lines = [f"{c.predicate} -> {term_string(c.sample_tail)}" for c in candidates]
    return ToolResult("\n".join(lines), predicate_candidates=tuple(candidates))


def execute_sparql_tool(graph: KnowledgeGraph, sparql_text: str) -> ToolResult:
    """Run a query and serialize the table (<= 50 rows shown); errors become text."""
    try:
        ast = sparql.parse(sparql_text)
        table = sparql.execute(ast, graph)
    except KgqaError as exc:
        return ToolResult(f"Error: {exc}")
    return ToolResult(table.render(MAX_RESULT_ROWS))


def ask_for_clarification(text: str) -> ToolResult:
    """Suspend the loop with a clarification request; observation echoes it."""
    if not text:
        raise ValueError("clarification text must be non-empty")
    return ToolResult(text, suspended=True)


def with_observation(result: ToolResult, text: str) -> ToolResult:
    return replace(result, observation_text=text)
