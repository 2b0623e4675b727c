"""Interactive knowledge-graph question answering with ambiguity-aware
clarification: a SPARQL-subset engine, a tool-using agent loop, and a
Bayesian plugin that decides when to ask the user which meaning they meant.
"""

from .ambiguity import AmbiguityReport, Thresholds, entity_ambiguity, intent_ambiguity, normalized_entropy
from .dialogue import Action, Backends, SessionState, Transcript, run_session
from .kg import EntityRecord, KnowledgeGraph, Literal, Triple, load_graph
from .pipeline import EvalItem, GridPoint, MetricsReport, UnAmbItem, dataset_stats, score_item
from .sparql import QueryAst, ResultTable, execute, parse, print_query
from .toolbox import EntityCandidate, PredicateCandidate, ToolResult

__all__ = [
    "Action", "AmbiguityReport", "Backends", "EntityCandidate", "EntityRecord",
    "EvalItem", "GridPoint", "KnowledgeGraph", "Literal", "MetricsReport",
    "PredicateCandidate", "QueryAst", "ResultTable", "SessionState",
    "Thresholds", "ToolResult", "Transcript", "Triple", "UnAmbItem",
    "dataset_stats", "entity_ambiguity", "execute", "intent_ambiguity",
    "load_graph", "normalized_entropy", "parse", "print_query", "run_session",
    "score_item",
]
