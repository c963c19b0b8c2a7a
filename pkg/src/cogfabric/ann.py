"""Small deterministic HNSW graph for approximate nearest-neighbor lookup.

Optional accelerator behind the memory store's retrieval interface. The exact
brute-force scan remains the reference behavior; this index trades a little
recall for sublinear search. All randomness (level draws) comes from a seeded
generator, so index construction is reproducible.

Vectors are assumed L2-normalized, so 1 - dot(a, b) is used as the distance.
"""

from __future__ import annotations

import heapq
import math
import random

import numpy as np


class HnswIndex:
    """Hierarchical navigable small-world graph over unit vectors."""

    def __init__(
        self,
        dim: int,
        m: int = 8,
        ef_construction: int = 100,
        ef_search: int = 64,
        seed: int = 0,
    ):
        self.dim = dim
        self._m = m
        self._mmax0 = 2 * m
        self._ml = 1.0 / math.log(m)
        self._ef_construction = ef_construction
        self.ef_search = ef_search
        self._rng = random.Random(seed)
        self._vecs: dict[str, np.ndarray] = {}
        # _links[layer][node] -> neighbor ids
        self._links: list[dict[str, list[str]]] = []
        self._entry: str | None = None
        self._entry_level = -1
        self._dead: set[str] = set()

    def __len__(self) -> int:
        return len(self._vecs) - len(self._dead)

    def _dist(self, vec: np.ndarray, other_id: str) -> float:
        return 1.0 - float(np.dot(vec, self._vecs[other_id]))

    def _max_links(self, layer: int) -> int:
        return self._mmax0 if layer == 0 else self._m

    def _greedy(self, vec: np.ndarray, start: str, layer: int) -> str:
        cur = start
        cur_d = self._dist(vec, cur)
        improved = True
        while improved:
            improved = False
            for nb in self._links[layer].get(cur, ()):
                d = self._dist(vec, nb)
                if d < cur_d or (d == cur_d and nb < cur):
                    cur, cur_d = nb, d
                    improved = True
        return cur

    def _search_layer(
        self, vec: np.ndarray, entries: list[str], ef: int, layer: int
    ) -> list[tuple[float, str]]:
        visited = set(entries)
        candidates = [(self._dist(vec, e), e) for e in entries]
        heapq.heapify(candidates)
        best = [(-d, e) for d, e in candidates]  # max-heap of the ef closest
        heapq.heapify(best)
        while candidates:
            d, node = heapq.heappop(candidates)
            if len(best) >= ef and d > -best[0][0]:
                break
            for nb in self._links[layer].get(node, ()):
                if nb in visited:
                    continue
                visited.add(nb)
                dn = self._dist(vec, nb)
                if len(best) < ef or dn < -best[0][0]:
                    heapq.heappush(candidates, (dn, nb))
                    heapq.heappush(best, (-dn, nb))
                    if len(best) > ef:
                        heapq.heappop(best)
        return sorted((-nd, e) for nd, e in best)

    def add(self, item_id: str, vec: np.ndarray) -> None:
        if item_id in self._vecs:
            raise ValueError(f"duplicate index id {item_id!r}")
        vec = np.asarray(vec, dtype=np.float64)
        self._vecs[item_id] = vec
        level = int(-math.log(max(self._rng.random(), 1e-12)) * self._ml)
        while len(self._links) <= level:
            self._links.append({})
        for lc in range(level + 1):
            self._links[lc].setdefault(item_id, [])
        if self._entry is None:
            self._entry, self._entry_level = item_id, level
            return
        cur = self._entry
        for lc in range(self._entry_level, level, -1):
            cur = self._greedy(vec, cur, lc)
        entries = [cur]
        for lc in range(min(level, self._entry_level), -1, -1):
            found = self._search_layer(vec, entries, self._ef_construction, lc)
            cap = self._max_links(lc)
            neighbors = [e for _, e in found[:cap]]
            self._links[lc][item_id] = list(neighbors)
            for nb in neighbors:
                nb_links = self._links[lc][nb]
                nb_links.append(item_id)
                if len(nb_links) > cap:
                    # keep the closest cap links of the neighbor
                    nb_vec = self._vecs[nb]
                    nb_links.sort(key=lambda x: (1.0 - float(np.dot(nb_vec, self._vecs[x])), x))
                    del nb_links[cap:]
            entries = [e for _, e in found]
        if level > self._entry_level:
            self._entry, self._entry_level = item_id, level

    def remove(self, item_id: str) -> None:
        """Tombstone an item; it stays in the graph but never surfaces."""
        if item_id in self._vecs:
            self._dead.add(item_id)

    def search(self, vec: np.ndarray, k: int) -> list[str]:
        """Ids of the approximately k closest live items, closest first."""
        if self._entry is None or k <= 0:
            return []
        vec = np.asarray(vec, dtype=np.float64)
        cur = self._entry
        for lc in range(self._entry_level, 0, -1):
            cur = self._greedy(vec, cur, lc)
        ef = max(self.ef_search, k + len(self._dead))
        found = self._search_layer(vec, [cur], ef, 0)
        out = [e for _, e in found if e not in self._dead]
        return out[:k]
