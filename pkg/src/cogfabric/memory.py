"""Active memory: episodic records, entity state, and the environment manifest.

The store is the fabric's working set for context injection. Retrieval is an
exact importance-weighted cosine scan by default; an approximate index can be
plugged in for large stores, in which case candidates are over-fetched and
re-scored exactly so ordering semantics never change.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from cogfabric.ann import HnswIndex
from cogfabric.core import (
    DimensionMismatchError,
    HashingEmbedder,
    ZeroVectorError,
    cosine_similarity,
)


@dataclass
class MemoryRecord:
    """One remembered observation.

    ``vector`` is always the embedding of ``text`` under the store's embedder;
    ``ttl`` of None means the record never expires. ``importance`` >= 0 scales
    retrieval scores by (1 + importance).
    """

    id: str
    text: str
    vector: np.ndarray
    created_at: float = 0.0
    ttl: float | None = None
    importance: float = 0.0
    origin: str = "fabric"


class MemoryStore:
    """Episodic record store with scored retrieval and TTL pruning."""

    def __init__(self, embedder: HashingEmbedder, index: HnswIndex | None = None):
        self.embedder = embedder
        self._records: dict[str, MemoryRecord] = {}
        self._counter = 0
        self._index = index
        if index is not None and index.dim != embedder.dim:
            raise DimensionMismatchError(
                f"index dim {index.dim} != embedder dim {embedder.dim}"
            )

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[MemoryRecord]:
        return list(self._records.values())

    def get(self, record_id: str) -> MemoryRecord | None:
        return self._records.get(record_id)

    def add(
        self,
        text: str,
        *,
        created_at: float = 0.0,
        ttl: float | None = None,
        importance: float = 0.0,
        origin: str = "fabric",
        record_id: str | None = None,
    ) -> MemoryRecord:
        """Embed ``text`` and store it, assigning a fresh id when none given."""
        if record_id is None:
            self._counter += 1
            record_id = f"m{self._counter:06d}"
        if record_id in self._records:
            raise ValueError(f"duplicate record id {record_id!r}")
        if importance < 0:
            raise ValueError("importance must be >= 0")
        rec = MemoryRecord(
            id=record_id,
            text=text,
            vector=self.embedder.embed(text),
            created_at=created_at,
            ttl=ttl,
            importance=importance,
            origin=origin,
        )
        self._records[record_id] = rec
        if self._index is not None and rec.vector.any():
            self._index.add(record_id, rec.vector)
        return rec

    def store(self, record: MemoryRecord) -> str:
        """Store a pre-built record. Its vector must match the store dimension."""
        if len(record.vector) != self.embedder.dim:
            raise DimensionMismatchError(
                f"record vector has dim {len(record.vector)}, store uses {self.embedder.dim}"
            )
        if record.id in self._records:
            raise ValueError(f"duplicate record id {record.id!r}")
        self._records[record.id] = record
        if self._index is not None and record.vector.any():
            self._index.add(record.id, record.vector)
        return record.id

    def retrieve(
        self, query: np.ndarray, k: int, floor: float = float("-inf")
    ) -> list[tuple[MemoryRecord, float]]:
        """Top-k records by cosine(query, vector) * (1 + importance).

        Descending score; ties broken by newer created_at, then lexicographic
        id. Records scoring below ``floor`` are excluded, as are records whose
        text embedded to the zero vector (their similarity is undefined).
        Raises ZeroVectorError for an all-zero query.
        """
        query = np.asarray(query, dtype=np.float64)
        if len(query) != self.embedder.dim:
            raise DimensionMismatchError(
                f"query has dim {len(query)}, store uses {self.embedder.dim}"
            )
        if not query.any():
            raise ZeroVectorError("cannot retrieve with a zero query vector")
        if k <= 0:
            return []
        if self._index is not None:
            over = max(4 * k, 32)
            cand_ids = self._index.search(query, over)
            pool: Iterable[MemoryRecord] = (
                self._records[i] for i in cand_ids if i in self._records
            )
        else:
            pool = self._records.values()
        scored = []
        for rec in pool:
            if not rec.vector.any():
                continue
            s = cosine_similarity(query, rec.vector) * (1.0 + rec.importance)
            if s >= floor:
                scored.append((rec, s))
        scored.sort(key=lambda pair: (-pair[1], -pair[0].created_at, pair[0].id))
        return scored[:k]

    def prune(self, now: float) -> int:
        """Drop every record whose created_at + ttl <= now. Returns the count."""
        doomed = [
            rid
            for rid, rec in self._records.items()
            if rec.ttl is not None and rec.created_at + rec.ttl <= now
        ]
        for rid in doomed:
            del self._records[rid]
            if self._index is not None:
                self._index.remove(rid)
        return len(doomed)

    # -- snapshot interchange ------------------------------------------------

    def export_snapshot(self, fp: IO[str]) -> int:
        """Write records as line-delimited JSON, one object per line."""
        n = 0
        for rec in sorted(self._records.values(), key=lambda r: r.id):
            fp.write(
                json.dumps(
                    {
                        "id": rec.id,
                        "text": rec.text,
                        "created_at": rec.created_at,
                        "ttl": rec.ttl,
                        "importance": rec.importance,
                        "origin": rec.origin,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            n += 1
        return n

    @classmethod
    def from_snapshot(
        cls,
        fp: IO[str],
        embedder: HashingEmbedder,
        index: HnswIndex | None = None,
    ) -> "MemoryStore":
        """Rebuild a store from a snapshot; vectors are recomputed from text."""
        store = cls(embedder, index=index)
        for line in fp:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            store.add(
                row["text"],
                created_at=row.get("created_at", 0.0),
                ttl=row.get("ttl"),
                importance=row.get("importance", 0.0),
                origin=row.get("origin", "fabric"),
                record_id=row["id"],
            )
        return store


# ---------------------------------------------------------------------------
# Entity state
# ---------------------------------------------------------------------------

@dataclass
class EntityState:
    """Merged view of one tracked entity."""

    name: str
    attributes: dict[str, str]
    updated_at: float
    updated_by: str


class EntityStore:
    """Per-attribute last-write-wins state for named entities.

    Each attribute keeps the (at, by) stamp of the write it came from; a new
    write lands only if its stamp is >= the stored one, so replaying a log in
    any order that preserves each entity's (at, by) order gives one result.
    """

    def __init__(self) -> None:
        # name -> attr -> (value, at, by)
        self._state: dict[str, dict[str, tuple[str, float, str]]] = {}

    def update(
        self, name: str, attributes: dict[str, str], *, by: str, at: float
    ) -> EntityState:
        slot = self._state.setdefault(name, {})
        for attr, value in attributes.items():
            current = slot.get(attr)
            if current is None or (at, by) >= (current[1], current[2]):
                slot[attr] = (str(value), at, by)
        state = self.lookup(name)
        assert state is not None
        return state

    def lookup(self, name: str) -> EntityState | None:
        slot = self._state.get(name)
        if not slot:
            return None
        newest = max((at, by) for _, at, by in slot.values())
        return EntityState(
            name=name,
            attributes={attr: v for attr, (v, _, _) in sorted(slot.items())},
            updated_at=newest[0],
            updated_by=newest[1],
        )

    def names(self) -> list[str]:
        return sorted(self._state)


# ---------------------------------------------------------------------------
# Environment manifest
# ---------------------------------------------------------------------------

class Manifest:
    """Exact-name registry of entities that exist in the environment.

    Membership is literal string equality. ``suggest`` finds the member whose
    name is nearest in the sub-token embedding view, for repairing references
    to things that do not exist.
    """

    def __init__(self, embedder: HashingEmbedder, names: Iterable[str] = ()):
        self.embedder = embedder
        self._names: dict[str, np.ndarray] = {}
        for n in names:
            self.add(n)

    def add(self, name: str) -> None:
        self._names[name] = self.embedder.embed_name(name)

    def discard(self, name: str) -> None:
        self._names.pop(name, None)

    def __contains__(self, name: str) -> bool:
        return name in self._names

    def __len__(self) -> int:
        return len(self._names)

    @property
    def names(self) -> list[str]:
        return sorted(self._names)

    def suggest(self, name: str, floor: float = 0.3) -> str | None:
        """Closest member by name similarity, or None if all fall below floor."""
        probe = self.embedder.embed_name(name)
        if not probe.any():
            return None
        best_name, best_sim = None, floor
        for member in sorted(self._names):
            vec = self._names[member]
            if not vec.any():
                continue
            sim = cosine_similarity(probe, vec)
            if sim > best_sim or (sim == best_sim and best_name is None):
                best_name, best_sim = member, sim
        return best_name
