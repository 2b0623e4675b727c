"""Evaluation metrics, batch evaluation, threshold grid search, and
unambiguous-dataset construction from interaction transcripts.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import dialogue, llm, sparql
from .ambiguity import Thresholds
from .config import RunConfig
from .errors import DatasetError, KgqaError
from .kg import KnowledgeGraph

CATEGORIES = ("1-hop", "2-hop", "Conj", "Compo", "Compa", "Super")

# Output schema of the statistics table (column names are part of the contract).
STATS_COLUMNS = ("Ave. #Entity", "Ave. #Intent", "#item", "Persent")


@dataclass(frozen=True)
class EvalItem:
    id: str
    question: str
    golden_sparql: str
    category: str


@dataclass
class ItemResult:
    id: str
    category: str
    f1: float
    rhits1: float
    em: int
    n_entity_clar: int = 0
    n_intent_clar: int = 0
    scores: list[dict] = field(default_factory=list)
    failure: str | None = None


@dataclass
class MetricsReport:
    per_item: list[ItemResult]
    per_category: dict[str, dict[str, float]]
    overall: dict[str, float]
    mean_entity_clarifications: float
    mean_intent_clarifications: float
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_item": [vars(r).copy() for r in self.per_item],
            "per_category": self.per_category,
            "overall": self.overall,
            "mean_entity_clarifications": self.mean_entity_clarifications,
            "mean_intent_clarifications": self.mean_intent_clarifications,
            "failures": self.failures,
        }

    def per_item_csv(self) -> str:
        lines = ["id,category,f1,rhits1,em,n_entity_clar,n_intent_clar"]
        for r in self.per_item:
            lines.append(f"{r.id},{r.category},{r.f1},{r.rhits1},{r.em},"
                         f"{r.n_entity_clar},{r.n_intent_clar}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class UnAmbItem:
    id: str
    original_question: str
    refined_question: str
    golden_sparql: str
    n_entity_clar: int
    n_intent_clar: int
    regenerated: bool


@dataclass(frozen=True)
class GridPoint:
    entity_threshold: float
    intent_threshold: float
    overall_f1: float
    mean_clarification_rounds: float


def score_item(predicted: set[str], gold: set[str]) -> tuple[float, float, int]:
    """(F1, RHits@1, EM) over canonical answer strings.

    RHits@1 is the expected hit rate of one uniformly random predicted
    answer, which equals precision exactly, so it is computed in expectation
    rather than sampled.
    """
    if not gold:
        raise DatasetError("gold answer set must be non-empty")
    intersection = len(predicted & gold)
    precision = intersection / len(predicted) if predicted else 0.0
    recall = intersection / len(gold)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    em = 1 if predicted == gold else 0
    return f1, precision, em


def load_dataset(path: str | Path) -> list[EvalItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            item = EvalItem(id=data["id"], question=data["question"],
                            golden_sparql=data["sparql"], category=data["category"])
            if item.category not in CATEGORIES:
                raise DatasetError(f"{path}:{line_no}: unknown category {item.category!r}")
            items.append(item)
    return items


def make_clarifier(backends: dialogue.Backends, golden_sparql: str,
                   graph: KnowledgeGraph, mode: str = "llm"):
    """Simulated user for batch runs: LLM-backed or the deterministic rule."""
    if mode == "rule":
        return lambda request: dialogue.rule_based_user(graph, golden_sparql, request)
    return lambda request: dialogue.simulate_user(golden_sparql, request,
                                                  backends.user_sim)


def _gold_answers(item: EvalItem, graph: KnowledgeGraph) -> set[str]:
    try:
        table = sparql.execute(sparql.parse(item.golden_sparql), graph)
    except KgqaError as exc:
        raise DatasetError(f"item {item.id}: golden SPARQL does not execute: {exc}") from exc
    answers = table.answer_set()
    if not answers:
        raise DatasetError(f"item {item.id}: golden SPARQL yields no answers on this graph")
    return answers


def evaluate_dataset(items: list[EvalItem], config: RunConfig,
                     backends: dialogue.Backends, graph: KnowledgeGraph,
                     clarifier_mode: str = "llm",
                     transcript_sink=None) -> MetricsReport:
    """Run a simulated-user session per item and aggregate metrics.

    Per-item failures score 0 and are listed; they never abort the batch.
    Items are processed in id order; parallelism only reorders execution,
    not aggregation.
    """
    items = sorted(items, key=lambda item: item.id)
    golds = {item.id: _gold_answers(item, graph) for item in items}

    def run_one(item: EvalItem) -> ItemResult:
        clarifier = make_clarifier(backends, item.golden_sparql, graph, clarifier_mode)
        try:
            transcript = dialogue.run_session(item.question, config, backends, graph,
                                              clarifier, golden_sparql=item.golden_sparql)
        except Exception as exc:
            return ItemResult(id=item.id, category=item.category, f1=0.0,
                              rhits1=0.0, em=0, failure=f"session error: {exc}")
        if transcript_sink is not None:
            transcript_sink(item, transcript)
        session = transcript.session
        scores = [{"kind": ev["ambiguity"], "score": ev["score"]}
                  for ev in transcript.events
                  if ev["kind"] == "ambiguity_score" and "score" in ev]
        failure = None if session.status == "finished" else (session.failure_reason or session.status)
        f1, rhits1, em = score_item(transcript.answer_strings(), golds[item.id])
        return ItemResult(id=item.id, category=item.category, f1=f1, rhits1=rhits1,
                          em=em, n_entity_clar=session.clarification_count_entity,
                          n_intent_clar=session.clarification_count_intent,
                          scores=scores, failure=failure)

    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(run_one, items))
    else:
        results = [run_one(item) for item in items]

    def mean(values):
        return sum(values) / len(values) if values else 0.0

    per_category: dict[str, dict[str, float]] = {}
    for category in sorted({r.category for r in results}):
        group = [r for r in results if r.category == category]
        per_category[category] = {"f1": mean([r.f1 for r in group]),
                                  "rhits1": mean([r.rhits1 for r in group]),
                                  "em": mean([r.em for r in group]),
                                  "n": float(len(group))}
    overall = {"f1": mean([r.f1 for r in results]),
               "rhits1": mean([r.rhits1 for r in results]),
               "em": mean([r.em for r in results])}
    return MetricsReport(
        per_item=results,
        per_category=per_category,
        overall=overall,
        mean_entity_clarifications=mean([r.n_entity_clar for r in results]),
        mean_intent_clarifications=mean([r.n_intent_clar for r in results]),
        failures=[f"{r.id}: {r.failure}" for r in results if r.failure],
    )


def default_grid() -> list[float]:
    return [0.5, 0.6, 0.7, 0.8, 0.9]


GRID_FIXED_AXIS = 0.5


def grid_search(items: list[EvalItem], entity_grid: list[float],
                intent_grid: list[float], config: RunConfig,
                backends_factory, graph: KnowledgeGraph,
                clarifier_mode: str = "llm") -> list[GridPoint]:
    """One-dimensional threshold sweeps: each entity threshold with intent
    fixed at 0.5, then each intent threshold with entity fixed at 0.5.

    `backends_factory` builds a fresh backend bundle per point, since
    sequence-style backends are consumed by a run.
    """
    points: list[tuple[float, float]] = [(e, GRID_FIXED_AXIS) for e in entity_grid]
    points += [(GRID_FIXED_AXIS, i) for i in intent_grid]
    results = []
    for entity_t, intent_t in points:
        point_config = replace(config, thresholds=Thresholds(entity_t, intent_t))
        report = evaluate_dataset(items, point_config, backends_factory(), graph,
                                  clarifier_mode=clarifier_mode)
        rounds = [r.n_entity_clar + r.n_intent_clar for r in report.per_item]
        results.append(GridPoint(
            entity_threshold=entity_t, intent_threshold=intent_t,
            overall_f1=report.overall["f1"],
            mean_clarification_rounds=sum(rounds) / len(rounds) if rounds else 0.0))
    return results


def grid_csv(points: list[GridPoint]) -> str:
    lines = ["entity_t,intent_t,f1,mean_rounds"]
    for p in points:
        lines.append(f"{p.entity_threshold},{p.intent_threshold},"
                     f"{p.overall_f1},{p.mean_clarification_rounds}")
    return "\n".join(lines) + "\n"


def build_unambiguous_item(transcript: dialogue.Transcript, backend,
                           item_id: str = "") -> UnAmbItem:
    """Regenerate a question from its clarification exchanges (if it had any)."""
    if not transcript.golden_sparql:
        raise ValueError("transcript has no golden SPARQL")
    session = transcript.session
    pairs = transcript.clarification_pairs()
    n_entity = session.clarification_count_entity
    n_intent = session.clarification_count_intent
    if not pairs:
        return UnAmbItem(id=item_id, original_question=session.question,
                         refined_question=session.question,
                         golden_sparql=transcript.golden_sparql,
                         n_entity_clar=n_entity, n_intent_clar=n_intent,
                         regenerated=False)
    assets = dialogue.load_prompt_assets()
    exchanges = "\n".join(f"Q: {req}\nA: {resp}" for req, resp in pairs)
    prompt = llm.ChatPrompt(
        system=assets.question_gen,
        turns=[("user", f"Original question: {session.question}\n"
                        f"Intended SPARQL: {transcript.golden_sparql}\n"
                        f"Clarification exchanges:\n{exchanges}")])
    refined = llm.complete(prompt, backend).text.strip()
    return UnAmbItem(id=item_id, original_question=session.question,
                     refined_question=refined,
                     golden_sparql=transcript.golden_sparql,
                     n_entity_clar=n_entity, n_intent_clar=n_intent,
                     regenerated=True)


def dataset_stats(items: list[UnAmbItem]) -> tuple[float, float, int, float]:
    """(avg entity clarifications, avg intent clarifications, regenerated
    count, regenerated percentage) over ALL items."""
    if not items:
        raise ValueError("items must be non-empty")
    n = len(items)
    avg_entity = sum(item.n_entity_clar for item in items) / n
    avg_intent = sum(item.n_intent_clar for item in items) / n
    n_regen = sum(1 for item in items if item.regenerated)
    percent = round(100.0 * n_regen / n, 2)
    return avg_entity, avg_intent, n_regen, percent


def stats_table(items: list[UnAmbItem]) -> dict[str, float | int]:
    avg_entity, avg_intent, n_regen, percent = dataset_stats(items)
    return dict(zip(STATS_COLUMNS, (avg_entity, avg_intent, n_regen, percent)))


def write_unamb_items(items: list[UnAmbItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps({
                "id": item.id,
                "original_question": item.original_question,
                "refined_question": item.refined_question,
                "sparql": item.golden_sparql,
                "n_entity_clar": item.n_entity_clar,
                "n_intent_clar": item.n_intent_clar,
                "regenerated": item.regenerated,
            }, sort_keys=True) + "\n")


def load_unamb_items(path: str | Path) -> list[UnAmbItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            items.append(UnAmbItem(
                id=data["id"], original_question=data["original_question"],
                refined_question=data["refined_question"],
                golden_sparql=data["sparql"],
                n_entity_clar=int(data["n_entity_clar"]),
                n_intent_clar=int(data["n_intent_clar"]),
                regenerated=bool(data["regenerated"])))
    return items
