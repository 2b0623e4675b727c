"""Immutable in-memory knowledge graph with triple indexes and name search.

The graph is loaded from two fixture files: a tab-separated triples file
(`subject<TAB>predicate<TAB>object`, objects matching ``m.*``/``g.*`` are
entity ids, everything else becomes a kind-inferred literal) and a JSON Lines
entity-metadata file. After loading, the graph never changes, so it is safe
for any number of concurrent readers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime
from difflib import SequenceMatcher
from pathlib import Path

from .errors import LoadError, UnknownEntityError

ENTITY_ID_RE = re.compile(r"^[mg]\.")
_INT_RE = re.compile(r"^-?\d+$")
_FLOAT_RE = re.compile(r"^-?\d+\.\d+([eE][+-]?\d+)?$")

# Minimum difflib ratio for a fuzzy name match; below it a record is not a
# match at all (keeps garbage queries from returning everything).
MIN_EDIT_RATIO = 0.5


@dataclass(frozen=True)
class Literal:
    """A kind-tagged literal value stored in its lexical form."""

    value: str
    kind: str  # one of: text, integer, float, datetime

    def as_python(self):
        """Parse the lexical form under the tagged kind."""
        if self.kind == "integer":
            return int(self.value)
        if self.kind == "float":
            return float(self.value)
        if self.kind == "datetime":
            return datetime.fromisoformat(self.value.replace("Z", "+00:00"))
        return self.value

    def canonical(self) -> str:
        """Kind-canonical string, used for answer comparison and display."""
        if self.kind == "integer":
            return str(int(self.value))
        if self.kind == "float":
            return str(float(self.value))
        if self.kind == "datetime":
            return self.as_python().isoformat()
        return self.value


def infer_literal(text: str) -> Literal:
    """Infer a literal's kind from its lexical form (integer/float/datetime/text)."""
    if _INT_RE.match(text):
        return Literal(text, "integer")
    if _FLOAT_RE.match(text):
        return Literal(text, "float")
    if len(text) >= 8 and text[0].isdigit():
        try:
            datetime.fromisoformat(text.replace("Z", "+00:00"))
            return Literal(text, "datetime")
        except ValueError:
            pass
    return Literal(text, "text")


def term_string(term) -> str:
    """Uniform string form of a graph term (entity id or literal canonical)."""
    return term.canonical() if isinstance(term, Literal) else term


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: "str | Literal"


@dataclass
class EntityRecord:
    """Metadata for one entity: names, description, types, popularity, CVT flag."""

    id: str
    canonical_name: str
    aliases: list[str] = field(default_factory=list)
    description: str = ""
    types: list[str] = field(default_factory=list)
    popularity: int = 0
    is_cvt: bool = False


def normalize_name(name: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    cleaned = re.sub(r"[^a-z0-9\s]+", " ", name.lower())
    return " ".join(cleaned.split())


class KnowledgeGraph:
    """Indexed triple set plus entity metadata. Immutable after construction."""

    def __init__(self, triples: set[Triple], records: dict[str, EntityRecord]):
        self._triples = frozenset(triples)
        self._records = dict(records)
        self._spo: dict[str, dict[str, set]] = {}
        self._pos: dict[str, dict] = {}
        self._osp: dict = {}
        self._pred_counts: dict[str, int] = {}
        for t in self._triples:
            self._spo.setdefault(t.subject, {}).setdefault(t.predicate, set()).add(t.object)
            self._pos.setdefault(t.predicate, {}).setdefault(t.object, set()).add(t.subject)
            self._osp.setdefault(t.object, {}).setdefault(t.subject, set()).add(t.predicate)
            self._pred_counts[t.predicate] = self._pred_counts.get(t.predicate, 0) + 1
        # Every id seen in a triple gets at least a minimal record.
        for t in self._triples:
            ids = [t.subject]
            if isinstance(t.object, str):
                ids.append(t.object)
            for eid in ids:
                if eid not in self._records:
                    self._records[eid] = EntityRecord(id=eid, canonical_name=eid)
        self._name_index: dict[str, list[str]] = {}
        for rec in self._records.values():
            for name in [rec.canonical_name, *rec.aliases]:
                norm = normalize_name(name)
                if norm:
                    self._name_index.setdefault(norm, []).append(rec.id)
        for ids in self._name_index.values():
            ids.sort()

    @property
    def triples(self) -> frozenset[Triple]:
        return self._triples

    @property
    def entities(self) -> dict[str, EntityRecord]:
        return self._records

    @property
    def name_index(self) -> dict[str, list[str]]:
        return self._name_index

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._records

    def predicate_count(self, predicate: str) -> int:
        return self._pred_counts.get(predicate, 0)

    def match(self, subject=None, predicate=None, obj=None):
        """Yield triples matching the given constants (None = wildcard)."""
        if subject is not None:
            by_pred = self._spo.get(subject, {})
            preds = [predicate] if predicate is not None else list(by_pred)
            for p in preds:
                for o in by_pred.get(p, ()):
                    if obj is None or o == obj:
                        yield Triple(subject, p, o)
        elif predicate is not None:
            by_obj = self._pos.get(predicate, {})
            objs = [obj] if obj is not None else list(by_obj)
            for o in objs:
                for s in by_obj.get(o, ()):
                    yield Triple(s, predicate, o)
        elif obj is not None:
            for s, preds in self._osp.get(obj, {}).items():
                for p in preds:
                    yield Triple(s, p, obj)
        else:
            yield from self._triples

    def find_entities_scored(self, surface_name: str, limit: int) -> list[tuple[EntityRecord, float]]:
        """Rank records against a surface name; returns (record, score in [0,1]) pairs.

        Scoring is tiered so that rank order equals score order: an exact
        normalized match scores 1.0, token-overlap matches land in
        (1/3, 2/3] via (1 + Jaccard)/3, and edit-similarity matches land in
        [0, 1/3] via difflib ratio / 3. Ties break by descending popularity,
        then lexicographic id.
        """
        if not surface_name.strip():
            raise ValueError("surface_name must be non-empty")
        if limit <= 0:
            raise ValueError("limit must be positive")
        query = normalize_name(surface_name)
        query_tokens = set(query.split())
        scored: list[tuple[EntityRecord, float]] = []
        for rec in self._records.values():
            best = 0.0
            for name in [rec.canonical_name, *rec.aliases]:
                norm = normalize_name(name)
                if not norm:
                    continue
                if norm == query:
                    best = max(best, 1.0)
                    continue
                tokens = set(norm.split())
                union = query_tokens | tokens
                jaccard = len(query_tokens & tokens) / len(union) if union else 0.0
                if jaccard > 0:
                    best = max(best, (1.0 + jaccard) / 3.0)
                else:
                    ratio = SequenceMatcher(None, query, norm).ratio()
                    if ratio >= MIN_EDIT_RATIO:
                        best = max(best, ratio / 3.0)
            if best > 0:
                scored.append((rec, best))
        scored.sort(key=lambda pair: (-pair[1], -pair[0].popularity, pair[0].id))
        return scored[:limit]

    def find_entities(self, surface_name: str, limit: int) -> list[EntityRecord]:
        return [rec for rec, _ in self.find_entities_scored(surface_name, limit)]

    def neighbors(self, node: str, direction: str = "both") -> list[tuple[str, "str | Literal"]]:
        """One-hop (predicate, neighbor) pairs in deterministic order.

        ``both`` concatenates outgoing then incoming; within each direction
        pairs sort by (predicate, neighbor id/value).
        """
        if node not in self._records:
            raise UnknownEntityError(f"unknown entity: {node}")
        if direction not in ("outgoing", "incoming", "both"):
            raise ValueError(f"bad direction: {direction}")
        result: list[tuple[str, str | Literal]] = []
        if direction in ("outgoing", "both"):
            out = [(p, o) for p, objs in self._spo.get(node, {}).items() for o in objs]
            out.sort(key=lambda pair: (pair[0], term_string(pair[1])))
            result.extend(out)
        if direction in ("incoming", "both"):
            inc = [(p, s) for s, preds in self._osp.get(node, {}).items() for p in preds]
            inc.sort(key=lambda pair: (pair[0], pair[1]))
            result.extend(inc)
        return result

    def save(self, triples_path: str | Path, entities_path: str | Path) -> None:
        """Write the graph back out in the fixture file formats."""
        lines = []
        for t in sorted(self._triples, key=lambda t: (t.subject, t.predicate, term_string(t.object))):
            obj = t.object if isinstance(t.object, str) else t.object.value
            lines.append(f"{t.subject}\t{t.predicate}\t{obj}")
        Path(triples_path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        with open(entities_path, "w", encoding="utf-8") as fh:
            for eid in sorted(self._records):
                rec = self._records[eid]
                fh.write(json.dumps({
                    "id": rec.id,
                    "name": rec.canonical_name,
                    "aliases": rec.aliases,
                    "description": rec.description,
                    "types": rec.types,
                    "popularity": rec.popularity,
                    "is_cvt": rec.is_cvt,
                }, sort_keys=True) + "\n")


def load_graph(triples_path: str | Path, entities_path: str | Path) -> KnowledgeGraph:
    """Load a graph from fixture files. Duplicate triples are deduplicated.

    Raises FileNotFoundError for a missing file and LoadError (with line
    number) for malformed content.
    """
    triples_path = Path(triples_path)
    entities_path = Path(entities_path)
    triples: set[Triple] = set()
    with open(triples_path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise LoadError(str(triples_path), line_no,
                                f"expected 3 tab-separated fields, got {len(fields)}")
            subject, predicate, obj_text = (f.strip() for f in fields)
            if not subject or not predicate:
                raise LoadError(str(triples_path), line_no, "empty subject or predicate")
            obj = obj_text if ENTITY_ID_RE.match(obj_text) else infer_literal(obj_text)
            triples.add(Triple(subject, predicate, obj))

    records: dict[str, EntityRecord] = {}
    with open(entities_path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(str(entities_path), line_no, f"bad JSON: {exc}") from exc
            if not isinstance(data, dict) or "id" not in data:
                raise LoadError(str(entities_path), line_no, "entity object must have an 'id'")
            eid = data["id"]
            if not eid:
                raise LoadError(str(entities_path), line_no, "empty entity id")
            rec = EntityRecord(
                id=eid,
                canonical_name=data.get("name", ""),
                aliases=list(data.get("aliases", [])),
                description=data.get("description", ""),
                types=list(data.get("types", [])),
                popularity=int(data.get("popularity", 0)),
                is_cvt=bool(data.get("is_cvt", False)),
            )
            if rec.popularity < 0:
                raise LoadError(str(entities_path), line_no, "popularity must be >= 0")
            if not rec.is_cvt and not rec.canonical_name:
                raise LoadError(str(entities_path), line_no,
                                f"non-CVT entity {eid} must have a name")
            records[eid] = rec
    return KnowledgeGraph(triples, records)
