import json
import time

import pytest
from fastapi.testclient import TestClient

from kgqa.cli import main, parse_range
from kgqa.config import RunConfig, load_config
from kgqa.dialogue import Backends
from kgqa.llm import SequenceBackend
from kgqa.service import SessionService, create_app

GOLD = "SELECT ?x WHERE { ns:m.0awa ns:people.person.profession ?x }"

ALICE_SCRIPT = [
    'Thought: Find the entity.\nAction: SearchNodes("alice walker")',
    'Action: AskForClarification("Which Alice Walker do you mean?")',
    f"Done: {GOLD}",
]


@pytest.fixture
def client(sym_graph):
    def factory():
        backend = SequenceBackend(list(ALICE_SCRIPT))
        return Backends(chat=backend, ppl=backend)

    service = SessionService(sym_graph, RunConfig(), factory)
    return TestClient(create_app(service))


def poll_until(client, sid, predicate, timeout=5.0):
    deadline = time.monotonic() + timeout
    events = []
    after = 0
    while time.monotonic() < deadline:
        batch = client.get(f"/sessions/{sid}/events",
                           params={"after": after, "wait_ms": 300}).json()["events"]
        events.extend(batch)
        if batch:
            after = batch[-1]["seq"]
        if predicate(events):
            return events
    raise AssertionError(f"timed out waiting; got {[e['kind'] for e in events]}")


def test_healthz(client):
    assert client.get("/healthz").json() == {"ok": True}


def test_create_session_and_first_events(client):
    response = client.post("/sessions", json={"question": "What was Alice Walker famous for?"})
    assert response.status_code == 200
    sid = response.json()["id"]
    events = poll_until(client, sid,
                        lambda evs: any(e["kind"] == "clarification_request" for e in evs))
    kinds = [e["kind"] for e in events]
    assert "tool_call" in kinds
    assert "hint" in kinds  # symmetric fixture triggers the entity hint
    assert kinds.count("clarification_request") == 1


def test_create_rejects_empty_question(client):
    assert client.post("/sessions", json={"question": "  "}).status_code == 400
    assert client.post("/sessions", json={}).status_code in (400, 422)


def test_distinct_session_ids(client):
    a = client.post("/sessions", json={"question": "q1"}).json()["id"]
    b = client.post("/sessions", json={"question": "q2"}).json()["id"]
    assert a != b


def test_full_clarification_loop(client):
    sid = client.post("/sessions", json={"question": "q"}).json()["id"]
    poll_until(client, sid,
               lambda evs: any(e["kind"] == "clarification_request" for e in evs))
    response = client.post(f"/sessions/{sid}/clarification",
                           json={"text": "The American author."})
    assert response.json() == {"ok": True}
    events = poll_until(client, sid,
                        lambda evs: any(e["kind"] == "final_answer" for e in evs))
    kinds = [e["kind"] for e in events]
    assert "clarification_response" in kinds
    final = [e for e in events if e["kind"] == "final_answer"][0]
    assert final["sparql"] == GOLD
    assert sorted(map(tuple, final["rows"])) == [("m.0act",), ("m.0wrt",)]
    # exactly one terminal event
    assert sum(1 for k in kinds if k in ("final_answer", "error")) == 1


def test_event_feed_chunking_stable(client):
    sid = client.post("/sessions", json={"question": "q"}).json()["id"]
    poll_until(client, sid,
               lambda evs: any(e["kind"] == "clarification_request" for e in evs))
    client.post(f"/sessions/{sid}/clarification", json={"text": "the author"})
    all_events = poll_until(client, sid,
                            lambda evs: any(e["kind"] == "final_answer" for e in evs))
    whole = client.get(f"/sessions/{sid}/events",
                       params={"after": 0, "wait_ms": 0}).json()["events"]
    assert [e["seq"] for e in whole] == list(range(1, len(whole) + 1))
    chunked = []
    after = 0
    while True:
        batch = client.get(f"/sessions/{sid}/events",
                           params={"after": after, "wait_ms": 0}).json()["events"][:2]
        if not batch:
            break
        chunked.extend(batch)
        after = batch[-1]["seq"]
    assert chunked == whole
    # internal score events never leak into the public feed
    assert all(e["kind"] != "ambiguity_score" for e in whole)


def test_events_after_terminal_returns_empty(client):
    sid = client.post("/sessions", json={"question": "q"}).json()["id"]
    poll_until(client, sid,
               lambda evs: any(e["kind"] == "clarification_request" for e in evs))
    client.post(f"/sessions/{sid}/clarification", json={"text": "the author"})
    events = poll_until(client, sid,
                        lambda evs: any(e["kind"] == "final_answer" for e in evs))
    last = max(e["seq"] for e in events)
    rest = client.get(f"/sessions/{sid}/events",
                      params={"after": last, "wait_ms": 100}).json()["events"]
    assert rest == []


def test_clarification_conflicts(client):
    sid = client.post("/sessions", json={"question": "q"}).json()["id"]
    poll_until(client, sid,
               lambda evs: any(e["kind"] == "clarification_request" for e in evs))
    assert client.post(f"/sessions/{sid}/clarification",
                       json={"text": "the author"}).status_code == 200
    # double submit: rejected whether or not the loop consumed the first one yet
    assert client.post(f"/sessions/{sid}/clarification",
                       json={"text": "again"}).status_code == 409
    poll_until(client, sid,
               lambda evs: any(e["kind"] == "final_answer" for e in evs))
    # finished session: conflict as well
    assert client.post(f"/sessions/{sid}/clarification",
                       json={"text": "late"}).status_code == 409


def test_clarification_unknown_session(client):
    assert client.post("/sessions/nope/clarification",
                       json={"text": "x"}).status_code == 404
    assert client.get("/sessions/nope/events").status_code == 404


# --- CLI ---

def test_parse_range():
    assert parse_range("0.5:0.9:0.1") == [0.5, 0.6, 0.7, 0.8, 0.9]
    assert parse_range("0.6:0.6:0.1") == [0.6]


def test_load_config_defaults():
    run_config, llm_config = load_config(None, env={})
    assert run_config.thresholds.entity_threshold == 0.6
    assert run_config.thresholds.intent_threshold == 0.8
    assert run_config.turn_budget == 10
    assert llm_config.mode == "mock"


def test_load_config_file_and_env(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"entity_threshold": 0.7, "turn_budget": 5,
                                "llm_mode": "replay", "cassette": "/tmp/x.jsonl"}))
    run_config, llm_config = load_config(path, env={"LLM_MODE": "mock"})
    assert run_config.thresholds.entity_threshold == 0.7
    assert run_config.turn_budget == 5
    assert llm_config.mode == "mock"  # env wins over file


def test_cli_load(fixtures_dir, capsys):
    code = main(["load", "--triples", str(fixtures_dir / "triples.tsv"),
                 "--entities", str(fixtures_dir / "entities.jsonl")])
    assert code == 0
    out = capsys.readouterr().out
    assert "38 triples" in out
    assert "21 entities" in out


def test_cli_ask_mock(fixtures_dir, capsys, tmp_path):
    out_path = tmp_path / "transcript.json"
    code = main(["ask", "what is the profession of alice walker",
                 "--triples", str(fixtures_dir / "triples.tsv"),
                 "--entities", str(fixtures_dir / "entities.jsonl"),
                 "--mode", "mock", "--out", str(out_path)])
    assert code == 0  # mock backend finishes (with empty answers)
    data = json.loads(out_path.read_text())
    assert data["status"] == "finished"


def test_cli_eval_and_plot_dist(fixtures_dir, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = main(["eval", "--dataset", str(fixtures_dir / "dataset.jsonl"),
                 "--triples", str(fixtures_dir / "triples.tsv"),
                 "--entities", str(fixtures_dir / "entities.jsonl"),
                 "--mode", "mock", "--out", str(report_path)])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert "overall" in report and "per_item" in report
    assert report_path.with_suffix(".csv").exists()
    capsys.readouterr()
    code = main(["plot-dist", "--reports", str(report_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "kind,bin_lo,bin_hi,count"


def test_cli_grid(fixtures_dir, tmp_path, capsys):
    out_path = tmp_path / "grid.csv"
    code = main(["grid", "--dataset", str(fixtures_dir / "dataset.jsonl"),
                 "--triples", str(fixtures_dir / "triples.tsv"),
                 "--entities", str(fixtures_dir / "entities.jsonl"),
                 "--mode", "mock", "--entity", "0.5:0.9:0.1",
                 "--intent", "0.5:0.9:0.1", "--out", str(out_path)])
    assert code == 0
    lines = out_path.read_text().splitlines()
    assert lines[0] == "entity_t,intent_t,f1,mean_rounds"
    assert len(lines) == 11  # header + 5 entity points + 5 intent points


def test_cli_build_unamb_and_stats(fixtures_dir, tmp_path, capsys, sym_graph):
    # produce a real transcript with one clarification, then rebuild from disk
    from kgqa.dialogue import run_session, simulate_user
    backend = SequenceBackend([
        'Action: SearchNodes("alice walker")',
        'Action: AskForClarification("Which Alice Walker?")',
        "The American author.",
        f"Done: {GOLD}",
    ])
    transcript = run_session("What was Alice Walker famous for?", RunConfig(),
                             Backends(chat=backend, ppl=backend), sym_graph,
                             lambda req: simulate_user(GOLD, req, backend),
                             golden_sparql=GOLD)
    tdir = tmp_path / "transcripts"
    tdir.mkdir()
    (tdir / "t1.json").write_text(json.dumps(transcript.to_dict()))
    out_path = tmp_path / "unamb.jsonl"
    code = main(["build-unamb", "--transcripts", str(tdir), "--out", str(out_path),
                 "--mode", "mock"])
    assert code == 0
    capsys.readouterr()
    code = main(["stats", "--unamb", str(out_path)])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split("\t") == ["Ave. #Entity", "Ave. #Intent", "#item", "Persent"]
    assert out[1].split("\t") == ["1.00", "0.00", "1", "100.00"]
