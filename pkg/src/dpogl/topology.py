"""Group topologies: membership structures, adjacency, distances, generators.

A group structure maps M overlapping groups onto N workers.  Two groups are
adjacent when they share at least one worker; the group distance is the
minimum number of adjacency hops between them (0 on the diagonal, infinity
when disconnected).  Information about a worker can only travel between
groups along adjacency hops, which is what the privacy accountant exploits.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

INFINITE_DISTANCE = math.inf

STRUCTURE_KINDS = ("GL", "LB", "CL", "RI")


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """Immutable worker/group membership map.

    ``members_of_group[m]`` holds the sorted worker ids of group m.  Every
    group is nonempty and every worker belongs to at least one group.
    """

    num_workers: int
    members_of_group: tuple[tuple[int, ...], ...]
    kind: str | None = None
    groups_of_worker: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.num_workers < 1:
            raise ValueError("num_workers must be >= 1")
        if not self.members_of_group:
            raise ValueError("at least one group is required")
        norm = []
        for m, members in enumerate(self.members_of_group):
            mem = tuple(sorted({int(w) for w in members}))
            if not mem:
                raise ValueError(f"group {m} is empty")
            if mem[0] < 0 or mem[-1] >= self.num_workers:
                raise ValueError(f"group {m} contains out-of-range worker ids")
            norm.append(mem)
        object.__setattr__(self, "members_of_group", tuple(norm))
        gof: list[list[int]] = [[] for _ in range(self.num_workers)]
        for m, mem in enumerate(norm):
            for w in mem:
                gof[w].append(m)
        orphans = [w for w, groups in enumerate(gof) if not groups]
        if orphans:
            raise ValueError(f"workers belong to no group: {orphans}")
        object.__setattr__(self, "groups_of_worker", tuple(tuple(g) for g in gof))

    @property
    def num_groups(self) -> int:
        return len(self.members_of_group)

    def neighborhood(self, worker: int) -> frozenset[int]:
        """All workers sharing at least one group with ``worker`` (inclusive)."""
        out: set[int] = set()
        for m in self.groups_of_worker[worker]:
            out.update(self.members_of_group[m])
        return frozenset(out)

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "N": self.num_workers,
            "M": self.num_groups,
            "members_of_group": [list(g) for g in self.members_of_group],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GroupStructure":
        payload = json.loads(text)
        structure = cls(
            num_workers=int(payload["N"]),
            members_of_group=tuple(tuple(g) for g in payload["members_of_group"]),
            kind=payload.get("kind"),
        )
        if "M" in payload and int(payload["M"]) != structure.num_groups:
            raise ValueError("M does not match the number of listed groups")
        return structure


def build_adjacency(structure: GroupStructure) -> np.ndarray:
    """Boolean (M, M) adjacency: groups share a worker; diagonal is True."""
    M = structure.num_groups
    members = [set(g) for g in structure.members_of_group]
    adj = np.eye(M, dtype=bool)
    for a in range(M):
        for b in range(a + 1, M):
            if members[a] & members[b]:
                adj[a, b] = adj[b, a] = True
    return adj


def distance_matrix(adjacency: np.ndarray) -> np.ndarray:
    """(M, M) hop distances by BFS; ``inf`` marks disconnected pairs.

    Equivalent to the smallest t >= 0 with a positive (m, m') entry in the
    t-th power of the adjacency matrix (self loops included, so the diagonal
    is 0).
    """
    M = adjacency.shape[0]
    dist = np.full((M, M), INFINITE_DISTANCE)
    for src in range(M):
        dist[src, src] = 0.0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in np.nonzero(adjacency[u])[0]:
                if math.isinf(dist[src, v]):
                    dist[src, v] = dist[src, u] + 1
                    queue.append(v)
    return dist


def group_distance(structure: GroupStructure, m: int, m_prime: int) -> float:
    return float(distance_matrix(build_adjacency(structure))[m, m_prime])


def gtoh_distance(structure: GroupStructure, source_group: int, worker: int,
                  dist: np.ndarray | None = None) -> float:
    """Distance from a source group to the nearest group of ``worker``."""
    if dist is None:
        dist = distance_matrix(build_adjacency(structure))
    return float(min(dist[source_group, m] for m in structure.groups_of_worker[worker]))


def is_string(structure: GroupStructure) -> bool:
    """True when the structure is an open chain under some group ordering.

    Requires (a) every worker in at most two groups and (b) the off-diagonal
    adjacency graph to be a simple path.  A valid band ordering exists exactly
    when (b) holds: the graph must be connected with M-1 edges and maximum
    degree 2, which is checked directly (no ordering search needed).
    """
    if any(len(groups) > 2 for groups in structure.groups_of_worker):
        return False
    M = structure.num_groups
    if M == 1:
        return True  # vacuous band
    adj = build_adjacency(structure)
    off = adj.copy()
    np.fill_diagonal(off, False)
    degrees = off.sum(axis=1)
    edges = int(off.sum()) // 2
    if edges != M - 1 or degrees.max(initial=0) > 2:
        return False
    return not np.isinf(distance_matrix(adj)).any()


def _contiguous_segments(num_workers: int, num_groups: int) -> list[list[int]]:
    # Trailing segments absorb the remainder one worker each: sizes differ <= 1.
    base, extra = divmod(num_workers, num_groups)
    sizes = [base] * (num_groups - extra) + [base + 1] * extra
    segments, start = [], 0
    for size in sizes:
        segments.append(list(range(start, start + size)))
        start += size
    return segments


def generate_structure(kind: str, num_workers: int, num_groups: int,
                       labels_of_worker: dict[int, set[int]] | None = None) -> GroupStructure:
    """Build one of the named structures.

    GL: one group holding every worker (num_groups must be 1).
    LB: a worker with label y in its local data joins group y mod M.
    CL: M disjoint contiguous clusters of near-equal size.
    RI: closed ring of M contiguous groups; consecutive groups share exactly
        one worker (the highest-indexed worker of each group, i.e. the first
        worker of the next segment).
    """
    kind = kind.upper()
    if kind not in STRUCTURE_KINDS:
        raise ValueError(f"unknown structure kind {kind!r}; expected one of {STRUCTURE_KINDS}")
    if num_workers < 1:
        raise ValueError("num_workers must be >= 1")
    if num_groups < 1:
        raise ValueError("num_groups must be >= 1")

    if kind == "GL":
        if num_groups != 1:
            raise ValueError("GL uses a single group; pass num_groups=1")
        members = (tuple(range(num_workers)),)
    elif kind == "LB":
        if labels_of_worker is None:
            raise ValueError("LB requires labels_of_worker (worker -> labels present locally)")
        groups: list[set[int]] = [set() for _ in range(num_groups)]
        for w in range(num_workers):
            labels = set(labels_of_worker.get(w, ()))
            if not labels:
                raise ValueError(f"LB: worker {w} has no labels, so it would join no group")
            for y in labels:
                groups[int(y) % num_groups].add(w)
        empty = [m for m, g in enumerate(groups) if not g]
        if empty:
            raise ValueError(f"LB: groups {empty} would be empty; reduce num_groups "
                             "or check the label map")
        members = tuple(tuple(sorted(g)) for g in groups)
    elif kind == "CL":
        if num_workers < num_groups:
            raise ValueError("CL needs at least one worker per cluster")
        members = tuple(tuple(seg) for seg in _contiguous_segments(num_workers, num_groups))
    else:  # RI
        if num_workers < num_groups:
            raise ValueError("RI needs at least one worker per group")
        segments = _contiguous_segments(num_workers, num_groups)
        if num_groups == 1:
            members = (tuple(range(num_workers)),)
        else:
            ring = []
            for m, seg in enumerate(segments):
                shared = segments[(m + 1) % num_groups][0]
                ring.append(tuple(sorted(set(seg) | {shared})))
            members = tuple(ring)

    return GroupStructure(num_workers=num_workers, members_of_group=members, kind=kind)
