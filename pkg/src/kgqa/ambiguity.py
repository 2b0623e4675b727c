"""Clarification plugin: Bayesian entity/intent ambiguity scoring and hints.

Entity scoring chain:
  1. prior_i      = popularity_i / sum(popularity)   (uniform when all zero)
  2. likelihood   = softmax(1 / PPL(question | description context))
  3. posterior    = likelihood * prior, normalized to sum 1 (Bayes)
  4. smoothed     = softmax(posterior)
  5. score        = entropy(smoothed) / log N        (N = 1 scores 0)

Intent scoring uses the same chain with the predicate's triple frequency as
the prior and a verbalized (anchor, predicate, tail) triple as the PPL
context. Step 4 deliberately softmaxes an already-normalized distribution:
it compresses the posterior (N = 2 scores can never drop below ~0.84), but
it is the stated computation and the scores are only compared against
thresholds tuned for it.

When a score reaches its threshold the hint template is appended to the
tool observation so the agent is nudged toward AskForClarification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import InvalidDistributionError
from .kg import KnowledgeGraph, Literal
from .toolbox import PredicateCandidate, ToolResult

HINT_TEMPLATE = ("\n[Ambiguity hint] {kind} ambiguity score {score:.3f} >= "
                 "threshold {threshold:g}. Candidates: {labels}. "
                 "Consider calling AskForClarification.")

DEFAULT_ENTITY_THRESHOLD = 0.6
DEFAULT_INTENT_THRESHOLD = 0.8


@dataclass(frozen=True)
class Thresholds:
    entity_threshold: float = DEFAULT_ENTITY_THRESHOLD
    intent_threshold: float = DEFAULT_INTENT_THRESHOLD

    def __post_init__(self):
        for value in (self.entity_threshold, self.intent_threshold):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"threshold {value} outside [0, 1]")


@dataclass(frozen=True)
class AmbiguityReport:
    kind: str  # "entity" | "intent"
    posterior: tuple[tuple[str, float], ...]
    score: float
    needs_clarification: bool
    hint_text: str


def normalized_entropy(distribution) -> float:
    """Shannon entropy over log N, in [0, 1]; N = 1 returns 0 by convention."""
    probs = list(distribution)
    if not probs:
        raise InvalidDistributionError("empty distribution")
    if any(p < 0 for p in probs):
        raise InvalidDistributionError("negative probability")
    total = sum(probs)
    if abs(total - 1.0) > 1e-9:
        raise InvalidDistributionError(f"probabilities sum to {total}, not 1")
    if len(probs) == 1:
        return 0.0
    entropy = -sum(p * math.log(p) for p in probs if p > 0)
    return min(1.0, max(0.0, entropy / math.log(len(probs))))


def _softmax(values: list[float]) -> list[float]:
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def _posterior(priors: list[float], ppls: list[float]) -> list[float]:
    likelihood = _softmax([1.0 / p for p in ppls])
    joint = [lik * pri for lik, pri in zip(likelihood, priors)]
    total = sum(joint)
    normalized = [j / total for j in joint] if total > 0 else [1.0 / len(joint)] * len(joint)
    return _softmax(normalized)


def _normalize_counts(counts: list[float]) -> list[float]:
    total = sum(counts)
    if total <= 0:
        return [1.0 / len(counts)] * len(counts)
    return [c / total for c in counts]


def entity_ppl_context(description: str) -> str:
    """PerplexityProvider contract: question is scored against this context."""
    return f"Description: {description or '(none)'}\nQuestion: "


def predicate_label(predicate: str) -> str:
    return predicate.rsplit(".", 1)[-1].replace("_", " ")


def verbalize_candidate(graph: KnowledgeGraph, candidate: PredicateCandidate,
                        fallback_anchor: str = "") -> str:
    """Render (anchor, predicate, tail) as a short sentence for PPL scoring."""
    anchor_id = candidate.anchor or fallback_anchor
    record = graph.entities.get(anchor_id)
    anchor_name = (record.canonical_name if record and record.canonical_name else anchor_id)
    tail = candidate.sample_tail
    if isinstance(tail, Literal):
        tail_name = tail.canonical()
    else:
        tail_record = graph.entities.get(tail)
        tail_name = (tail_record.canonical_name
                     if tail_record and tail_record.canonical_name else tail)
    return f"{anchor_name} {predicate_label(candidate.predicate)} {tail_name}."


def predicate_frequency(graph: KnowledgeGraph, predicate: str) -> int:
    """Triple count of a predicate; composites use the rarer hop's count."""
    parts = predicate.split(" / ")
    if len(parts) == 1:
        return graph.predicate_count(predicate)
    return min(graph.predicate_count(p) for p in parts)


def _build_report(kind: str, labels: list[str], priors: list[float],
                  ppls: list[float], threshold: float) -> AmbiguityReport:
    if len(labels) == 1:
        posterior = [1.0]
        score = 0.0
    else:
        posterior = _posterior(priors, ppls)
        score = normalized_entropy(posterior)
    needs = score >= threshold
    hint = ""
    if needs:
        hint = HINT_TEMPLATE.format(kind=kind, score=score, threshold=threshold,
                                    labels="; ".join(labels))
    return AmbiguityReport(kind=kind, posterior=tuple(zip(labels, posterior)),
                           score=score, needs_clarification=needs, hint_text=hint)


def entity_ambiguity(question: str, candidates, ppl,
                     thresholds: Thresholds | None = None) -> AmbiguityReport:
    """Score how ambiguous a SearchNodes candidate set is for the question."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidates must be non-empty")
    thresholds = thresholds or Thresholds()
    priors = _normalize_counts([float(c.record.popularity) for c in candidates])
    ppls = [ppl.perplexity(entity_ppl_context(c.record.description), question)
            for c in candidates]
    labels = [c.record.canonical_name for c in candidates]
    return _build_report("entity", labels, priors, ppls, thresholds.entity_threshold)


def intent_ambiguity(question: str, anchors, candidates, ppl, graph: KnowledgeGraph,
                     thresholds: Thresholds | None = None) -> AmbiguityReport:
    """Score how ambiguous a SearchGraphPattern predicate set is for the question."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidates must be non-empty")
    thresholds = thresholds or Thresholds()
    anchors = list(anchors)
    fallback = anchors[0] if anchors else ""
    priors = _normalize_counts([float(predicate_frequency(graph, c.predicate))
                                for c in candidates])
    ppls = [ppl.perplexity(verbalize_candidate(graph, c, fallback), question)
            for c in candidates]
    labels = [c.predicate for c in candidates]
    return _build_report("intent", labels, priors, ppls, thresholds.intent_threshold)


def decorate_observation(result: ToolResult, question: str, thresholds: Thresholds,
                         ppl, graph: KnowledgeGraph, sink=None) -> ToolResult:
    """Append ambiguity hints to a tool observation when scores cross thresholds.

    Provider failures degrade gracefully: the observation comes back
    unmodified and the failure is reported through `sink` (the session's
    transcript log). Results without candidates pass through untouched.
    """
    if result.suspended:
        return result
    reports: list[AmbiguityReport] = []
    if result.entity_candidates and len(result.entity_candidates) >= 2:
        try:
            reports.append(entity_ambiguity(question, result.entity_candidates,
                                            ppl, thresholds))
        except Exception as exc:  # provider contract allows arbitrary failures
            if sink:
                sink({"kind": "entity", "error": str(exc)})
            return result
    if result.predicate_candidates and len(result.predicate_candidates) >= 2:
        anchors = [c.anchor for c in result.predicate_candidates]
        try:
            reports.append(intent_ambiguity(question, anchors,
                                            result.predicate_candidates, ppl,
                                            graph, thresholds))
        except Exception as exc:
            if sink:
                sink({"kind": "intent", "error": str(exc)})
            return result
    if not reports:
        return result
    text = result.observation_text
    for report in reports:
        if sink:
            threshold = (thresholds.entity_threshold if report.kind == "entity"
                         else thresholds.intent_threshold)
            sink({"kind": report.kind, "score": report.score,
                  "threshold": threshold, "triggered": report.needs_clarification})
        if report.needs_clarification:
            text += report.hint_text
    if text == result.observation_text:
        return result
    return replace(result, observation_text=text)
