"""Exact budget-constrained informative path search on a collision-free graph.

Depth-first branch and bound over simple paths. Feasibility pruning uses
shortest distances to the goal; objective pruning uses the posterior trace
over the prefix vertices joined with every still-reachable vertex, which is
an admissible lower bound because adding measurements never increases
posterior variance.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, ValidationError
from .gp import KernelParams, MeasurementSet, TestSet, posterior_cov_trace

# Absorbs float summation-order differences between path accumulation and
# Dijkstra distances when the budget is exactly tight.
BUDGET_SLACK = 1e-9

# Bound pruning keeps anything within this margin of the incumbent so exact
# ties survive for the tie-break rule.
PRUNE_MARGIN = 1e-12

UNREACHABLE = math.inf


@dataclass(frozen=True)
class InformativeGraph:
    """Vertices in free space with straight, collision-free edges."""

    vertices: np.ndarray  # (V, 2)
    edges: tuple  # ((i, j), ...) with i < j

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 1:
            raise ValidationError("graph needs a (V, 2) vertex array", field="graph.vertices")
        if not np.all(np.isfinite(verts)):
            raise ValidationError("graph vertices must be finite", field="graph.vertices")
        V = verts.shape[0]
        seen = set()
        norm_edges = []
        for k, (i, j) in enumerate(self.edges):
            i, j = int(i), int(j)
            if not (0 <= i < V and 0 <= j < V):
                raise ValidationError(f"edge {k} references a missing vertex", field=f"graph.edges[{k}]")
            if i == j:
                raise ValidationError(f"edge {k} is a self-loop", field=f"graph.edges[{k}]")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValidationError(f"edge {k} is a duplicate", field=f"graph.edges[{k}]")
            seen.add(key)
            norm_edges.append(key)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(norm_edges))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def edge_length(self, i: int, j: int) -> float:
        # Lengths are always recomputed from coordinates, never stored.
        return float(np.linalg.norm(self.vertices[i] - self.vertices[j]))

    def adjacency(self) -> list:
        adj = [[] for _ in range(self.n_vertices)]
        for i, j in self.edges:
            d = self.edge_length(i, j)
            adj[i].append((j, d))
            adj[j].append((i, d))
        for lst in adj:
            lst.sort()
        return adj


@dataclass(frozen=True)
class GraphPath:
    vertices: tuple  # vertex index sequence v_0..v_k
    edges: tuple  # consecutive pairs
    total_length: float

    @staticmethod
    def from_sequence(graph: InformativeGraph, seq) -> "GraphPath":
        seq = tuple(int(v) for v in seq)
        edge_set = set(graph.edges)
        edges = []
        total = 0.0
        for a, b in zip(seq, seq[1:]):
            key = (min(a, b), max(a, b))
            if key not in edge_set:
                raise ValidationError(f"consecutive vertices {a},{b} are not an edge")
            edges.append(key)
            total += graph.edge_length(a, b)
        return GraphPath(seq, tuple(edges), total)


def goal_distances(graph: InformativeGraph, g: int) -> np.ndarray:
    """Exact shortest-path distance from every vertex to g (inf if cut off)."""
    V = graph.n_vertices
    if not 0 <= g < V:
        raise ValidationError("goal vertex not in graph")
    adj = graph.adjacency()
    dist = np.full(V, UNREACHABLE)
    dist[g] = 0.0
    heap = [(0.0, g)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for w, length in adj[u]:
            nd = d + length
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def all_pairs_distances(graph: InformativeGraph) -> np.ndarray:
    return np.vstack([goal_distances(graph, v) for v in range(graph.n_vertices)])


def _path_trace(graph, T, params, vertex_set, cache):
    key = frozenset(vertex_set)
    val = cache.get(key)
    if val is None:
        pts = graph.vertices[sorted(key)]
        val = posterior_cov_trace(T, MeasurementSet(pts), params)
        cache[key] = val
    return val


def _candidate_better(cand, incumbent) -> bool:
    """(objective, length, sequence) ordering; exact float ties fall through."""
    if incumbent is None:
        return True
    if cand[0] != incumbent[0]:
        return cand[0] < incumbent[0]
    if cand[1] != incumbent[1]:
        return cand[1] < incumbent[1]
    return cand[2] < incumbent[2]


def plan_graph_path(
    graph: InformativeGraph,
    s: int,
    g: int,
    B: float,
    T: TestSet,
    params: KernelParams,
    max_visits: int = 1,
):
    """Budget-feasible path minimizing the posterior trace over its vertices.

    Exact under the simple-path policy (max_visits=1); max_visits=2 allows
    bounded revisits, with duplicate vertices measured once. Returns
    (GraphPath, objective). Ties break toward shorter length, then
    lexicographic vertex sequence.
    """
    V = graph.n_vertices
    if not (0 <= s < V and 0 <= g < V):
        raise ValidationError("start or goal vertex not in graph")
    if max_visits not in (1, 2):
        raise ValidationError("max_visits must be 1 or 2")
    dist = all_pairs_distances(graph)
    goal_dist = dist[:, g]
    shortest = goal_dist[s]
    if shortest > B + BUDGET_SLACK:
        raise InfeasibleError(
            f"budget {B} below shortest start-goal distance {shortest}",
            deficit=float(shortest - B),
            shortest_length=float(shortest),
        )

    adj = graph.adjacency()
    # Expand children nearest the goal first: good incumbents early.
    order = [sorted(lst, key=lambda wd: (goal_dist[wd[0]], wd[0])) for lst in adj]
    cache: dict = {}
    vertex_arr = np.arange(V)
    best = None  # (objective, length, sequence)

    visits = np.zeros(V, dtype=int)
    seq = [s]
    visits[s] = 1

    def reachable_set(current, used):
        mask = used + dist[current] + goal_dist <= B + BUDGET_SLACK
        return vertex_arr[mask]

    def dfs(current, used):
        nonlocal best
        bound_set = set(seq) | set(reachable_set(current, used).tolist())
        bound = _path_trace(graph, T, params, bound_set, cache)
        if best is not None and bound > best[0] + PRUNE_MARGIN:
            return
        if current == g:
            obj = _path_trace(graph, T, params, set(seq), cache)
            cand = (obj, used, tuple(seq))
            if _candidate_better(cand, best):
                best = cand
            if max_visits == 1:
                return
        for w, length in order[current]:
            if visits[w] >= max_visits:
                continue
            nu = used + length
            if nu + goal_dist[w] > B + BUDGET_SLACK:
                continue
            visits[w] += 1
            seq.append(w)
            dfs(w, nu)
            seq.pop()
            visits[w] -= 1

    if s == g:
        obj = _path_trace(graph, T, params, {s}, cache)
        return GraphPath((s,), (), 0.0), obj

    dfs(s, 0.0)
    if best is None:
        raise InfeasibleError(
            "no feasible path within budget", shortest_length=float(shortest)
        )
    return GraphPath.from_sequence(graph, best[2]), best[0]


def enumerate_feasible_paths(
    graph: InformativeGraph, s: int, g: int, B: float, cap: int = 100000
) -> list:
    """All simple budget-feasible s-g paths in lexicographic DFS order."""
    V = graph.n_vertices
    if not (0 <= s < V and 0 <= g < V):
        raise ValidationError("start or goal vertex not in graph")
    goal_dist = goal_distances(graph, g)
    adj = graph.adjacency()
    out = []
    visited = np.zeros(V, dtype=bool)
    seq = [s]
    visited[s] = True

    def dfs(current, used):
        if current == g:
            if len(out) >= cap:
                raise ValidationError(f"more than {cap} feasible paths; raise the cap")
            out.append(GraphPath.from_sequence(graph, seq))
            return
        for w, length in adj[current]:
            if visited[w]:
                continue
            nu = used + length
            if nu + goal_dist[w] > B + BUDGET_SLACK:
                continue
            visited[w] = True
            seq.append(w)
            dfs(w, nu)
            seq.pop()
            visited[w] = False

    if s == g:
        return [GraphPath((s,), (), 0.0)]
    dfs(s, 0.0)
    return out
