"""Acceptance suite: one test per acceptance criterion, each printing
a PASS line with its measured evidence on success.

Run with `pytest tests/test_acceptance.py -v -s`.
"""

import json
import random
import time

import pytest

from kgqa import ambiguity as ambiguity_module
from kgqa.ambiguity import (Thresholds, entity_ambiguity, intent_ambiguity,
                            normalized_entropy)
from kgqa.config import RunConfig, load_config
from kgqa.cli import parse_range
from kgqa.dialogue import Backends, run_session, simulate_user
from kgqa.kg import EntityRecord, KnowledgeGraph, Triple, load_graph
from kgqa.llm import (CassetteRecorder, RuleBackend, ScriptedBackend,
                      SequenceBackend)
from kgqa.pipeline import (STATS_COLUMNS, EvalItem, build_unambiguous_item,
                           dataset_stats, grid_search, score_item, stats_table)
from kgqa.sparql import execute, parse
from kgqa.toolbox import EntityCandidate, PredicateCandidate

from .conftest import FIXTURES
from .oracles import OrderedPPL, brute_force_execute, oracle_ambiguity_score
from .test_sparql import ALL_QUERIES, CORPUS


def ok(name: str, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"\n[PASS] {name}{suffix}")


def make_entity_candidates(pops):
    return [EntityCandidate(EntityRecord(f"m.{i:02d}", f"Name{i}",
                                         description=f"desc-{i}", popularity=p), 1.0)
            for i, p in enumerate(pops)]


def test_ambiguity_oracle_equivalence():
    """200 randomized candidate sets: entity and intent scores match the
    independent oracle chain within 1e-9, in under 5 seconds."""
    rng = random.Random(20250811)
    started = time.monotonic()

    for case in range(200):
        n = rng.randint(1, 8)
        pops = [0] * n if case % 17 == 0 else [rng.randint(0, 1000) for _ in range(n)]
        ppls = [rng.uniform(1.0, 50.0) for _ in range(n)]
        report = entity_ambiguity("question?", make_entity_candidates(pops),
                                  OrderedPPL(ppls))
        expected = oracle_ambiguity_score(pops, ppls)
        assert abs(report.score - expected) < 1e-9, (case, pops, ppls)

    for case in range(200):
        n = rng.randint(1, 8)
        freqs = [rng.randint(1, 5) for _ in range(n)]
        triples = set()
        for i, freq in enumerate(freqs):
            for j in range(freq):
                triples.add(Triple(f"m.s{i}x{j}", f"rel{i}.block{i}.pred{i}",
                                   f"m.t{i}x{j}"))
        graph = KnowledgeGraph(triples, {})
        candidates = [PredicateCandidate(f"rel{i}.block{i}.pred{i}", f"m.t{i}x0",
                                         1.0, "m.s0x0") for i in range(n)]
        ppls = [rng.uniform(1.0, 50.0) for _ in range(n)]
        report = intent_ambiguity("question?", ["m.s0x0"], candidates,
                                  OrderedPPL(ppls), graph)
        expected = oracle_ambiguity_score(freqs, ppls)
        assert abs(report.score - expected) < 1e-9, (case, freqs, ppls)

    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    ok("ambiguity oracle equivalence",
       f"400 randomized sets within 1e-9 in {elapsed:.2f}s")


def test_entropy_properties():
    """normalized_entropy in [0,1] on 10,000 random distributions; uniform
    scores 1 +- 1e-12; one-hot and N=1 score 0; under 1 second."""
    rng = random.Random(42)
    started = time.monotonic()
    for _ in range(10_000):
        n = rng.randint(1, 10)
        weights = [rng.uniform(1e-9, 1.0) for _ in range(n)]
        total = sum(weights)
        value = normalized_entropy([w / total for w in weights])
        assert 0.0 <= value <= 1.0
    for n in range(2, 11):
        assert abs(normalized_entropy([1.0 / n] * n) - 1.0) <= 1e-12
        one_hot = [0.0] * n
        one_hot[rng.randrange(n)] = 1.0
        assert normalized_entropy(one_hot) == 0.0
    assert normalized_entropy([1.0]) == 0.0
    elapsed = time.monotonic() - started
    assert elapsed < 1.0
    ok("entropy properties", f"10,000 distributions in {elapsed:.2f}s")


def test_prior_scale_invariance():
    """Scaling all popularities by c in {1e-3, 1, 1e3} moves the entity score
    by less than 1e-9 across 100 random cases."""
    rng = random.Random(7)
    for _ in range(100):
        n = rng.randint(2, 8)
        pops = [rng.randint(1, 1000) for _ in range(n)]
        ppls = [rng.uniform(1.0, 40.0) for _ in range(n)]
        scores = []
        for c in (1e-3, 1.0, 1e3):
            candidates = make_entity_candidates([0] * n)
            for cand, p in zip(candidates, pops):
                cand.record.popularity = p * c
            scores.append(entity_ambiguity("q", candidates, OrderedPPL(ppls)).score)
        assert max(scores) - min(scores) < 1e-9
    ok("prior scale invariance", "100 cases x 3 scales within 1e-9")


def test_threshold_constants_and_grid_shape(graph):
    """Defaults are exactly 0.6/0.8; the grid enumerates 0.5-0.9 step 0.1
    sweeps with the other axis fixed at 0.5."""
    assert Thresholds() == Thresholds(0.6, 0.8)
    assert Thresholds().entity_threshold == 0.6
    assert Thresholds().intent_threshold == 0.8
    run_config, _ = load_config(None, env={})
    assert run_config.thresholds == Thresholds(0.6, 0.8)

    sweep = parse_range("0.5:0.9:0.1")
    assert sweep == [0.5, 0.6, 0.7, 0.8, 0.9]

    items = [EvalItem("w1", "what is the profession of alice walker",
                      "SELECT ?x WHERE { ns:m.0awa ns:people.person.profession ?x }",
                      "1-hop")]

    def factory():
        backend = RuleBackend(lambda prompt:
                              "Done: SELECT ?x WHERE "
                              "{ ns:m.0awa ns:people.person.profession ?x }")
        return Backends(chat=backend, ppl=backend)

    points = grid_search(items, sweep, sweep, RunConfig(), factory, graph,
                         clarifier_mode="rule")
    assert len(points) == 10
    assert [(p.entity_threshold, p.intent_threshold) for p in points[:5]] == \
        [(v, 0.5) for v in sweep]
    assert [(p.entity_threshold, p.intent_threshold) for p in points[5:]] == \
        [(0.5, v) for v in sweep]
    ok("threshold constants", "defaults 0.6/0.8; 5+5 sweep points with 0.5 fixed")


def test_sparql_oracle_equivalence(graph):
    """50 corpus queries across all six categories match the brute-force
    enumerator on the fixture graph in under 10 seconds."""
    assert len(ALL_QUERIES) == 50
    assert set(CORPUS) == {"1-hop", "2-hop", "Conj", "Compo", "Compa", "Super"}
    assert len(graph.triples) <= 200
    started = time.monotonic()
    for query in ALL_QUERIES:
        ast = parse(query)
        table = execute(ast, graph)
        columns, rows = brute_force_execute(ast, graph)
        assert table.columns == columns, query
        assert set(table.rows) == set(rows), query
        assert table.rows == rows, query
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    ok("sparql oracle equivalence", f"50 queries in {elapsed:.2f}s")


GOLD = "SELECT ?x WHERE { ns:m.0awa ns:people.person.profession ?x }"

ALICE_SCRIPT = [
    'Thought: Find the entity for Alice Walker.\nAction: SearchNodes("alice walker")',
    'Thought: Two same-name candidates and an entity hint; ask the user.\n'
    'Action: AskForClarification("Which Alice Walker do you mean: the American '
    'author or the British fencer?")',
    "The American author.",
    f"Thought: The author is m.0awa.\nDone: {GOLD}",
]


def run_alice(backend, graph):
    backends = Backends(chat=backend, ppl=backend)
    clarifier = lambda request: simulate_user(GOLD, request, backend)
    return run_session("What was Alice Walker famous for?", RunConfig(), backends,
                       graph, clarifier, golden_sparql=GOLD)


def test_end_to_end_scripted_scenario(tmp_path):
    """Alice Walker scenario: entity hint at score exactly 1.0, suspension,
    simulated resume, gold-equivalent finish with F1 = 1.0; two cassette
    replays are byte-identical modulo timestamps."""
    sym_graph = load_graph(FIXTURES / "triples.tsv", FIXTURES / "entities_sym.jsonl")
    cassette = tmp_path / "alice.jsonl"
    recorder = CassetteRecorder(SequenceBackend(list(ALICE_SCRIPT), ppl_value=8.0,
                                                model_id="alice-e2e"), cassette)
    recorded = run_alice(recorder, sym_graph)
    assert recorded.session.status == "finished"

    replays = []
    for _ in range(2):
        replays.append(run_alice(ScriptedBackend(cassette, model_id="alice-e2e"),
                                 sym_graph))

    for transcript in replays:
        session = transcript.session
        assert session.status == "finished"
        # the hint fired at exactly 1.0 against threshold 0.6
        first_obs = session.history[0].observation
        assert "[Ambiguity hint] entity ambiguity score 1.000 >= threshold 0.6" \
            in first_obs
        # suspension and resumption happened, attributed to the entity hint
        assert session.clarification_count_entity == 1
        assert session.clarification_count_intent == 0
        assert transcript.clarification_pairs() == [
            ("Which Alice Walker do you mean: the American author or the British "
             "fencer?", "The American author.")]
        # gold-equivalent final query
        gold_answers = execute(parse(GOLD), sym_graph).answer_set()
        assert execute(parse(session.final_sparql), sym_graph).answer_set() == \
            gold_answers
        f1, rhits1, em = score_item(transcript.answer_strings(), gold_answers)
        assert (f1, rhits1, em) == (1.0, 1.0, 1)

    a, b = (json.dumps(t.to_dict(include_timestamps=False), sort_keys=True)
            for t in replays)
    assert a == b
    ok("end-to-end scripted scenario",
       "hint 1.000 >= 0.6, one entity clarification, F1=1.0, replays identical")


def test_metric_contracts():
    """score_item fixed points plus rhits1 == precision on 1,000 random pairs."""
    assert score_item({"a"}, {"a"}) == (1.0, 1.0, 1)
    assert score_item(set(), {"a"}) == (0.0, 0.0, 0)
    assert score_item({"a", "b"}, {"b", "c"}) == (0.5, 0.5, 0)
    rng = random.Random(99)
    universe = [f"ans{i}" for i in range(15)]
    for _ in range(1000):
        pred = set(rng.sample(universe, rng.randint(0, 10)))
        gold = set(rng.sample(universe, rng.randint(1, 10)))
        _, rhits1, _ = score_item(pred, gold)
        precision = len(pred & gold) / len(pred) if pred else 0.0
        assert rhits1 == precision
    ok("metric contracts", "fixed points + 1,000 random rhits1==precision")


def _reactive_agent(hint_kind: str, first_action: str, gold: str):
    tool_name = first_action.split("(")[0].split(": ")[1]

    def rule(prompt):
        agent_turns = [text for role, text in prompt.turns if role == "agent"]
        tool_turns = [text for role, text in prompt.turns if role == "tool"]
        if not any(tool_name in text for text in agent_turns):
            return first_action
        hinted = any(f"[Ambiguity hint] {hint_kind}" in text for text in tool_turns)
        asked = any("AskForClarification" in text for text in agent_turns)
        if hinted and not asked:
            return 'Action: AskForClarification("Which do you mean?")'
        return f"Done: {gold}"

    return rule


def test_grid_monotonicity(graph, monkeypatch):
    """With plugin scores pinned at 0.7, mean clarification rounds never
    increase with the threshold and drop to 0 for thresholds above 0.7."""
    monkeypatch.setattr(ambiguity_module, "normalized_entropy", lambda dist: 0.7)
    sweep = [0.5, 0.6, 0.7, 0.8, 0.9]

    entity_gold = "SELECT ?x WHERE { ns:m.0awa ns:people.person.profession ?x }"
    entity_items = [EvalItem("e1", "what is the profession of alice walker",
                             entity_gold, "1-hop")]

    def entity_factory():
        backend = RuleBackend(_reactive_agent(
            "entity", 'Action: SearchNodes("alice walker")', entity_gold))
        return Backends(chat=backend, ppl=backend)

    entity_points = grid_search(entity_items, sweep, [], RunConfig(),
                                entity_factory, graph, clarifier_mode="rule")
    entity_rounds = [p.mean_clarification_rounds for p in entity_points]
    assert entity_rounds == sorted(entity_rounds, reverse=True)
    assert entity_rounds == [1.0, 1.0, 1.0, 0.0, 0.0]

    intent_gold = "SELECT ?x WHERE { ns:m.0awf ns:people.person.profession ?x }"
    intent_items = [EvalItem("i1", "what does the british alice walker do",
                             intent_gold, "1-hop")]
    sgp = ('Action: SearchGraphPattern("SELECT ?e WHERE { ?e '
           'ns:people.person.nationality ns:m.0uk }", "profession")')

    def intent_factory():
        backend = RuleBackend(_reactive_agent("intent", sgp, intent_gold))
        return Backends(chat=backend, ppl=backend)

    intent_points = grid_search(intent_items, [], sweep, RunConfig(),
                                intent_factory, graph, clarifier_mode="rule")
    intent_rounds = [p.mean_clarification_rounds for p in intent_points]
    assert intent_rounds == sorted(intent_rounds, reverse=True)
    assert intent_rounds == [1.0, 1.0, 1.0, 0.0, 0.0]
    ok("grid monotonicity",
       f"entity rounds {entity_rounds}, intent rounds {intent_rounds}")


def test_dataset_pipeline():
    """4-transcript fixture reproduces (0.5, 0.5, 2, 50.00) and the stats
    table column schema."""
    from kgqa.dialogue import Action, SessionState, Transcript, Turn

    def transcript(question, pairs, n_entity, n_intent):
        session = SessionState(question=question)
        for request, response in pairs:
            session.history.append(Turn(
                action=Action(kind="tool_call", tool="AskForClarification",
                              args=[request]),
                clarification=response))
        session.clarification_count_entity = n_entity
        session.clarification_count_intent = n_intent
        session.status = "finished"
        return Transcript(session=session,
                          golden_sparql="SELECT ?x WHERE { ?x ns:a ?y }")

    transcripts = [
        transcript("q1", [("which entity?", "the author"),
                          ("which relation?", "awards"),
                          ("which relation exactly?", "pulitzer")], 1, 2),
        transcript("q2", [], 0, 0),
        transcript("q3", [("which entity?", "the fencer")], 1, 0),
        transcript("q4", [], 0, 0),
    ]
    backend = SequenceBackend(["refined q1", "refined q3"])
    items = [build_unambiguous_item(t, backend, item_id=f"t{i}")
             for i, t in enumerate(transcripts)]
    assert [item.regenerated for item in items] == [True, False, True, False]
    assert items[0].refined_question == "refined q1"
    assert items[1].refined_question == "q2"
    assert dataset_stats(items) == (0.5, 0.5, 2, 50.00)
    table = stats_table(items)
    assert tuple(table.keys()) == STATS_COLUMNS
    assert table["#item"] == 2
    assert table["Persent"] == 50.00
    ok("dataset pipeline", "(0.5, 0.5, 2, 50.00) with the stats column schema")
