"""Two-agent interactive loop: QA agent actions, clarification suspension,
and the dummy-user simulator.

One session is strictly sequential: the agent emits one action per turn,
the toolbox produces an observation (possibly decorated with an ambiguity
hint), and AskForClarification suspends the loop until a clarification
response arrives. History serializes per turn as::

    Thought: <t>
    Action: Tool("arg", ...)        (or Done: <sparql>)
    Observation: <o>
    Clarification: <c>              (only on clarified turns)
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from importlib import resources

from . import ambiguity, llm, sparql, toolbox
from .config import RunConfig
from .errors import KgqaError, SessionStateError
from .kg import KnowledgeGraph

TOOL_ARITIES = {"SearchNodes": 1, "SearchGraphPattern": 2,
                "ExecuteSPARQL": 1, "AskForClarification": 1}

CORRECTIVE_OBSERVATION = 'Invalid action format; use Action: Tool(...) or Done: ...'
MAX_PARSE_RETRIES = 3

_HINT_RE = re.compile(r"\[Ambiguity hint\] (entity|intent)")


@dataclass
class Action:
    kind: str  # tool_call | done | malformed
    tool: str | None = None
    args: list[str] = field(default_factory=list)
    final_sparql: str | None = None
    thought: str | None = None
    raw: str = ""


@dataclass
class Turn:
    action: Action
    observation: str | None = None
    clarification: str | None = None


@dataclass
class SessionState:
    question: str
    history: list[Turn] = field(default_factory=list)
    status: str = "running"  # running | awaiting_clarification | finished | failed
    final_sparql: str | None = None
    answers: sparql.ResultTable | None = None
    turn_budget: int = 10
    clarification_count_entity: int = 0
    clarification_count_intent: int = 0
    failure_reason: str | None = None
    last_hint_kind: str | None = None
    events: list[dict] = field(default_factory=list)
    observer: object = None

    def emit(self, kind: str, **payload):
        event = {"seq": len(self.events) + 1, "ts": time.time(), "kind": kind, **payload}
        self.events.append(event)
        if self.observer is not None:
            self.observer(event)

    def fail(self, reason: str):
        self.status = "failed"
        self.failure_reason = reason
        self.emit("error", reason=reason)


@dataclass
class Transcript:
    """Final session snapshot plus the append-only event log."""

    session: SessionState
    golden_sparql: str | None = None
    events: list[dict] = field(default_factory=list)

    def clarification_pairs(self) -> list[tuple[str, str]]:
        """The (request, response) subsequence used for dataset regeneration."""
        pairs = []
        for turn in self.session.history:
            if (turn.action.kind == "tool_call"
                    and turn.action.tool == "AskForClarification"
                    and turn.clarification is not None):
                pairs.append((turn.action.args[0], turn.clarification))
        return pairs

    def answer_strings(self) -> set[str]:
        if self.session.answers is None:
            return set()
        return self.session.answers.answer_set()

    def to_dict(self, include_timestamps: bool = True) -> dict:
        session = self.session
        answers = None
        if session.answers is not None:
            answers = {"columns": list(session.answers.columns),
                       "rows": [[sparql.term_string(v) for v in row]
                                for row in session.answers.rows]}
        events = self.events if include_timestamps else [
            {k: v for k, v in ev.items() if k != "ts"} for ev in self.events]
        return {
            "question": session.question,
            "status": session.status,
            "history": [{
                "action": {
                    "kind": t.action.kind, "tool": t.action.tool,
                    "args": list(t.action.args), "final_sparql": t.action.final_sparql,
                    "thought": t.action.thought, "raw": t.action.raw,
                },
                "observation": t.observation,
                "clarification": t.clarification,
            } for t in session.history],
            "final_sparql": session.final_sparql,
            "answers": answers,
            "clarification_count_entity": session.clarification_count_entity,
            "clarification_count_intent": session.clarification_count_intent,
            "failure_reason": session.failure_reason,
            "golden_sparql": self.golden_sparql,
            "events": events,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transcript":
        session = SessionState(question=data["question"], status=data["status"],
                               final_sparql=data.get("final_sparql"),
                               clarification_count_entity=data.get("clarification_count_entity", 0),
                               clarification_count_intent=data.get("clarification_count_intent", 0),
                               failure_reason=data.get("failure_reason"))
        for t in data.get("history", []):
            a = t["action"]
            session.history.append(Turn(
                action=Action(kind=a["kind"], tool=a.get("tool"),
                              args=list(a.get("args", [])),
                              final_sparql=a.get("final_sparql"),
                              thought=a.get("thought"), raw=a.get("raw", "")),
                observation=t.get("observation"),
                clarification=t.get("clarification"),
            ))
        answers = data.get("answers")
        if answers is not None:
            from .kg import ENTITY_ID_RE, Literal
            rows = tuple(
                tuple(cell if ENTITY_ID_RE.match(cell) else Literal(cell, "text")
                      for cell in row)
                for row in answers["rows"])
            session.answers = sparql.ResultTable(tuple(answers["columns"]), rows)
        session.events = list(data.get("events", []))
        return cls(session=session, golden_sparql=data.get("golden_sparql"),
                   events=session.events)


# --- action grammar ---

def _parse_quoted_args(body: str) -> list[str] | None:
    args: list[str] = []
    i, n = 0, len(body)
    while i < n and body[i].isspace():
        i += 1
    if i == n:
        return []
    while True:
        if i >= n or body[i] != '"':
            return None
        i += 1
        buf: list[str] = []
        closed = False
        while i < n:
            ch = body[i]
            if ch == "\\":
                if i + 1 >= n:
                    return None
                buf.append({"n": "\n", "t": "\t"}.get(body[i + 1], body[i + 1]))
                i += 2
            elif ch == '"':
                i += 1
                closed = True
                break
            else:
                buf.append(ch)
                i += 1
        if not closed:
            return None
        args.append("".join(buf))
        while i < n and body[i].isspace():
            i += 1
        if i == n:
            return args
        if body[i] != ",":
            return None
        i += 1
        while i < n and body[i].isspace():
            i += 1


_ACTION_LINE_RE = re.compile(r"^Action:\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$")


def parse_action(completion_text: str) -> Action:
    """Parse a completion into an Action; anything off-grammar is `malformed`.

    Grammar: optional Thought line(s), then exactly one
    ``Action: Tool("arg", ...)`` or ``Done: <sparql>`` (Done may span lines).
    """
    raw = completion_text
    lines = completion_text.strip().splitlines()
    thought_lines: list[str] = []
    idx = 0
    while idx < len(lines) and not lines[idx].startswith(("Action:", "Done:")):
        line = lines[idx]
        if not thought_lines and not line.startswith("Thought:"):
            return Action(kind="malformed", raw=raw)
        thought_lines.append(line[len("Thought:"):].strip() if line.startswith("Thought:") else line)
        idx += 1
    if idx >= len(lines):
        return Action(kind="malformed", raw=raw)
    thought = "\n".join(thought_lines).strip() or None
    line = lines[idx]
    trailing = lines[idx + 1:]

    if line.startswith("Done:"):
        sparql_text = "\n".join([line[len("Done:"):].strip()] + trailing).strip()
        if not sparql_text:
            return Action(kind="malformed", raw=raw)
        return Action(kind="done", final_sparql=sparql_text, thought=thought, raw=raw)

    if any(part.strip() for part in trailing):
        return Action(kind="malformed", raw=raw)
    match = _ACTION_LINE_RE.match(line)
    if not match:
        return Action(kind="malformed", raw=raw)
    tool, body = match.group(1), match.group(2)
    if tool not in TOOL_ARITIES:
        return Action(kind="malformed", raw=raw)
    args = _parse_quoted_args(body)
    if args is None or len(args) != TOOL_ARITIES[tool]:
        return Action(kind="malformed", raw=raw)
    return Action(kind="tool_call", tool=tool, args=args, thought=thought, raw=raw)


def _quote(arg: str) -> str:
    escaped = arg.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{escaped}"'


def format_action(action: Action) -> str:
    if action.kind == "tool_call":
        return f"Action: {action.tool}({', '.join(_quote(a) for a in action.args)})"
    if action.kind == "done":
        return f"Done: {action.final_sparql}"
    return action.raw


# --- prompts ---

@dataclass(frozen=True)
class PromptAssets:
    qa_system: str
    qa_exemplars: tuple[str, ...]
    user_sim: str
    question_gen: str


_ASSETS: PromptAssets | None = None


def load_prompt_assets() -> PromptAssets:
    global _ASSETS
    if _ASSETS is None:
        pkg = resources.files("kgqa.prompts")
        exemplars = tuple(
            block.strip() for block in
            (pkg / "qa_exemplars.txt").read_text(encoding="utf-8").split("\n---\n")
            if block.strip())
        _ASSETS = PromptAssets(
            qa_system=(pkg / "qa_system.txt").read_text(encoding="utf-8").strip(),
            qa_exemplars=exemplars,
            user_sim=(pkg / "user_sim.txt").read_text(encoding="utf-8").strip(),
            question_gen=(pkg / "question_gen.txt").read_text(encoding="utf-8").strip(),
        )
    return _ASSETS


def serialize_history(session: SessionState) -> list[tuple[str, str]]:
    """Question + per-turn (action, observation, clarification) prompt turns."""
    turns: list[tuple[str, str]] = [("user", f"Question: {session.question}")]
    for turn in session.history:
        parts = []
        if turn.action.thought:
            parts.append(f"Thought: {turn.action.thought}")
        parts.append(format_action(turn.action))
        turns.append(("agent", "\n".join(parts)))
        if turn.observation is not None:
            turns.append(("tool", f"Observation: {turn.observation}"))
        if turn.clarification is not None:
            turns.append(("user", f"Clarification: {turn.clarification}"))
    return turns


def build_qa_prompt(session: SessionState, config: RunConfig,
                    assets: PromptAssets | None = None) -> llm.ChatPrompt:
    assets = assets or load_prompt_assets()
    exemplars = [("user", f"Example session:\n{block}")
                 for block in assets.qa_exemplars[:config.n_exemplars]]
    return llm.ChatPrompt(system=assets.qa_system, exemplars=exemplars,
                          turns=serialize_history(session))


# --- the loop ---

def next_action(session: SessionState, config: RunConfig, backend) -> Action:
    """Ask the backend for the next action, retrying malformed completions.

    Each malformed completion is appended to history with a corrective
    observation; after MAX_PARSE_RETRIES the session fails.
    """
    if session.status != "running":
        raise SessionStateError(f"next_action on a {session.status} session")
    action = Action(kind="malformed", raw="")
    for _ in range(MAX_PARSE_RETRIES):
        prompt = build_qa_prompt(session, config)
        try:
            completion = llm.complete(prompt, backend)
        except KgqaError as exc:
            session.fail(str(exc))
            return Action(kind="malformed", raw=f"<backend error: {exc}>")
        action = parse_action(completion.text)
        if action.kind != "malformed":
            return action
        if len(session.history) >= session.turn_budget:
            session.fail("budget")
            return action
        session.history.append(Turn(action=action, observation=CORRECTIVE_OBSERVATION))
        session.emit("tool_call", malformed=True, raw=action.raw)
        session.emit("observation", text=CORRECTIVE_OBSERVATION)
    session.fail("action-parse-exhausted")
    return action


def step(session: SessionState, action: Action, graph: KnowledgeGraph,
         thresholds: ambiguity.Thresholds, ppl, tool_k: int = 10) -> SessionState:
    """Apply one action: dispatch tools, decorate observations, transition status."""
    if session.status != "running":
        raise SessionStateError(f"step on a {session.status} session")
    if len(session.history) >= session.turn_budget:
        session.fail("budget")
        return session
    if action.thought:
        session.emit("thought", text=action.thought)

    if action.kind == "done":
        session.history.append(Turn(action=action))
        session.final_sparql = action.final_sparql
        answers = None
        try:
            answers = sparql.execute(sparql.parse(action.final_sparql), graph)
        except KgqaError:
            pass  # unexecutable final query scores as an empty prediction
        session.answers = answers
        session.status = "finished"
        session.emit("final_answer", sparql=action.final_sparql,
                     columns=list(answers.columns) if answers else [],
                     rows=[[sparql.term_string(v) for v in row] for row in answers.rows]
                     if answers else [])
        return session

    if action.kind == "malformed":
        session.history.append(Turn(action=action, observation=CORRECTIVE_OBSERVATION))
        session.emit("tool_call", malformed=True, raw=action.raw)
        session.emit("observation", text=CORRECTIVE_OBSERVATION)
        return session

    session.emit("tool_call", tool=action.tool, args=list(action.args))
    if action.tool == "AskForClarification":
        try:
            toolbox.ask_for_clarification(action.args[0])
        except ValueError as exc:
            session.history.append(Turn(action=action, observation=f"Error: {exc}"))
            session.emit("observation", text=f"Error: {exc}")
            return session
        session.history.append(Turn(action=action))
        session.status = "awaiting_clarification"
        session.emit("clarification_request", text=action.args[0])
        return session

    try:
        if action.tool == "SearchNodes":
            result = toolbox.search_nodes(graph, action.args[0], tool_k)
        elif action.tool == "SearchGraphPattern":
            result = toolbox.search_graph_pattern(graph, action.args[0],
                                                  action.args[1], tool_k)
        else:
            result = toolbox.execute_sparql_tool(graph, action.args[0])
    except (ValueError, KgqaError) as exc:
        result = toolbox.ToolResult(f"Error: {exc}")

    plugin_events: list[dict] = []
    decorated = ambiguity.decorate_observation(result, session.question, thresholds,
                                               ppl, graph, sink=plugin_events.append)
    session.history.append(Turn(action=action, observation=decorated.observation_text))
    session.emit("observation", text=result.observation_text)
    hint_lines = [line for line in decorated.observation_text.splitlines()
                  if line.startswith("[Ambiguity hint]")]
    for ev in plugin_events:
        payload = {"ambiguity": ev["kind"], **{k: v for k, v in ev.items() if k != "kind"}}
        session.emit("ambiguity_score", **payload)
        if ev.get("triggered"):
            session.last_hint_kind = ev["kind"]
            text = next((line for line in hint_lines
                         if line.startswith(f"[Ambiguity hint] {ev['kind']}")), "")
            session.emit("hint", ambiguity=ev["kind"], score=ev["score"],
                         threshold=ev["threshold"], text=text)
    return session


def resume(session: SessionState, clarification: str) -> SessionState:
    """Record the user's clarification response and return to the running state."""
    if session.status != "awaiting_clarification":
        raise SessionStateError(f"resume on a {session.status} session")
    if not clarification:
        raise ValueError("clarification must be non-empty")
    session.history[-1].clarification = clarification
    if session.last_hint_kind == "entity":
        session.clarification_count_entity += 1
    else:
        session.clarification_count_intent += 1
    session.status = "running"
    session.emit("clarification_response", text=clarification)
    return session


def simulate_user(golden_sparql: str, request: str, backend) -> str:
    """LLM dummy user: answers a clarification request from the golden query."""
    if not request:
        raise ValueError("request must be non-empty")
    assets = load_prompt_assets()
    prompt = llm.ChatPrompt(
        system=assets.user_sim,
        turns=[("user", f"Intended SPARQL: {golden_sparql}\n"
                        f"Clarification request: {request}")])
    return llm.complete(prompt, backend).text


_GOLD_ID_RE = re.compile(r"ns:([mg]\.[\w.-]*\w)")


def rule_based_user(graph: KnowledgeGraph, golden_sparql: str, request: str) -> str:
    """Deterministic simulator: name the candidate whose id the gold query uses."""
    ids = _GOLD_ID_RE.findall(golden_sparql)
    named = [graph.entities[eid].canonical_name for eid in ids
             if eid in graph.entities and graph.entities[eid].canonical_name]
    lowered = request.lower()
    for name in named:
        if name.lower() in lowered:
            return name
    if named:
        return named[0]
    return "Either is fine."


def run_session(question: str, config: RunConfig, backends, graph: KnowledgeGraph,
                clarifier, golden_sparql: str | None = None,
                on_event=None) -> Transcript:
    """Drive a session to a terminal state, routing suspensions to `clarifier`.

    `backends` needs .chat (completions) and .ppl (perplexity); `clarifier`
    maps a clarification request to a response (human or simulated).
    """
    session = SessionState(question=question, turn_budget=config.turn_budget,
                           observer=on_event)
    while session.status == "running":
        if len(session.history) >= session.turn_budget:
            session.fail("budget")
            break
        action = next_action(session, config, backends.chat)
        if session.status != "running":
            break
        step(session, action, graph, config.thresholds, backends.ppl, config.tool_k)
        if session.status == "awaiting_clarification":
            request = session.history[-1].action.args[0]
            try:
                response = clarifier(request)
            except Exception as exc:
                session.fail(f"clarifier error: {exc}")
                break
            resume(session, response)
    return Transcript(session=session, golden_sparql=golden_sparql,
                      events=session.events)


@dataclass
class Backends:
    """The model handles a session needs; user_sim defaults to the chat backend."""

    chat: object
    ppl: object
    user_sim: object = None

    def __post_init__(self):
        if self.user_sim is None:
            self.user_sim = self.chat
