"""kNN segment graphs, subgraph decomposition and graph-theoretic features.

Nodes are feature-matrix row indices. Within each k-means cluster every
segment links to its nearest neighbours, edges carry similarity
``1 / (1 + distance)``, and clusters larger than ``n_max`` are cut into
contiguous blocks. Each subgraph yields an average shortest path length,
a label modularity and the Laplacian spectral gap.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .clustering import assign_clusters, default_n_clusters, minibatch_kmeans
from .errors import (
    ClusterTooSmall,
    ConfigError,
    DimensionMismatch,
    Disconnected,
    NoEdges,
    SingletonGraph,
    UnmappedRow,
)
from .features import FeatureMatrix, standardize_apply, standardize_fit

GRAPH_COLUMNS = ("graph_L", "graph_Q", "graph_gap")
GLOBAL = -1
SCOPES = ("subgraph", "global")
PATH_COSTS = ("similarity", "distance")
LEAKAGE_MODES = ("faithful", "strict")


@dataclass
class WeightedGraph:
    node_ids: np.ndarray
    edges: list  # (u, v, w) with u < v

    def __post_init__(self):
        self.node_ids = np.asarray(self.node_ids, dtype=int)

    @property
    def n_nodes(self) -> int:
        return int(self.node_ids.size)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def index(self) -> dict:
        return {int(v): i for i, v in enumerate(self.node_ids)}

    def adjacency(self) -> np.ndarray:
        pos = self.index()
        a = np.zeros((self.n_nodes, self.n_nodes))
        for u, v, w in self.edges:
            a[pos[u], pos[v]] = a[pos[v], pos[u]] = w
        return a

    def is_connected(self) -> bool:
        if self.n_nodes <= 1:
            return True
        pos = self.index()
        nbrs = [[] for _ in range(self.n_nodes)]
        for u, v, _ in self.edges:
            nbrs[pos[u]].append(pos[v])
            nbrs[pos[v]].append(pos[u])
        seen = {0}
        stack = [0]
        while stack:
            for j in nbrs[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n_nodes


@dataclass
class Subgraph(WeightedGraph):
    parent_cluster: int = -1


@dataclass
class GraphMetrics:
    per_subgraph: list
    L_avg: float
    Q_mod: float
    Delta_spec: float
    d_avg: float
    L_exp_sw: float
    flags: list = field(default_factory=list)

    def global_triple(self) -> tuple:
        return (self.L_avg, self.Q_mod, self.Delta_spec)

    def to_dict(self) -> dict:
        return {
            "L_avg": _json_float(self.L_avg),
            "Q_mod": _json_float(self.Q_mod),
            "Delta_spec": _json_float(self.Delta_spec),
            "d_avg": _json_float(self.d_avg),
            "L_exp_sw": _json_float(self.L_exp_sw),
            "n_subgraphs": len(self.per_subgraph),
            "flags": list(self.flags),
            "per_subgraph": [{k: _json_float(v) for k, v in s.items()} for s in self.per_subgraph],
        }


def _json_float(v):
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _pairwise_dist(x):
    return cdist(x, x)


def build_knn_graph(rows, k_max: int = 5, tau_percentile: float = 95.0, node_ids=None) -> WeightedGraph:
    """kNN graph over one cluster's (standardized) rows.

    Each node proposes edges to its ``min(k_max, n-1)`` nearest neighbours;
    proposals longer than the ``tau_percentile`` percentile of all proposal
    distances are dropped, the rest are merged into undirected edges.
    """
    x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    n = x.shape[0]
    if n < 2:
        raise ClusterTooSmall(f"a kNN graph needs at least 2 nodes, got {n}")
    if not 0 < tau_percentile <= 100:
        raise ConfigError(f"tau_percentile must lie in (0, 100], got {tau_percentile}")
    ids = np.arange(n) if node_ids is None else np.asarray(node_ids, dtype=int)
    k = min(k_max, n - 1)
    dist = _pairwise_dist(x)
    np.fill_diagonal(dist, np.inf)
    nbrs = np.argsort(dist, axis=1, kind="stable")[:, :k]
    cand_d = np.take_along_axis(dist, nbrs, axis=1)
    tau = np.percentile(cand_d, tau_percentile)
    edges = {}
    for i in range(n):
        for j, d in zip(nbrs[i], cand_d[i]):
            if d <= tau:
                u, v = sorted((int(ids[i]), int(ids[j])))
                edges[(u, v)] = 1.0 / (1.0 + float(d))
    order = np.argsort(ids, kind="stable")
    return WeightedGraph(ids[order], [(u, v, w) for (u, v), w in sorted(edges.items())])


def split_subgraphs(graph: WeightedGraph, n_max: int = 200, parent_cluster: int = -1) -> list:
    """Cut a graph into ``ceil(|V| / n_max)`` contiguous node-id blocks."""
    if n_max < 2:
        raise ConfigError(f"n_max must be >= 2, got {n_max}")
    ids = np.sort(graph.node_ids)
    if ids.size <= n_max:
        return [Subgraph(ids, list(graph.edges), parent_cluster)]
    blocks = [ids[s : s + n_max] for s in range(0, ids.size, n_max)]
    block_of = {int(v): b for b, blk in enumerate(blocks) for v in blk}
    edge_lists = [[] for _ in blocks]
    for u, v, w in graph.edges:
        if block_of[u] == block_of[v]:
            edge_lists[block_of[u]].append((u, v, w))
    return [Subgraph(blk, el, parent_cluster) for blk, el in zip(blocks, edge_lists)]


def _edge_cost(w, path_cost):
    if path_cost == "similarity":
        return w
    if path_cost == "distance":
        return 1.0 / w - 1.0
    raise ConfigError(f"unknown path cost mode {path_cost!r}")


def avg_shortest_path_length(sub: WeightedGraph, path_cost: str = "similarity") -> float:
    """Mean weighted shortest-path length over ordered node pairs (Dijkstra).

    With ``path_cost="similarity"`` the edge weights themselves are the path
    costs; ``"distance"`` uses ``1/w - 1`` instead.
    """
    n = sub.n_nodes
    if n < 2:
        raise SingletonGraph("path length needs at least 2 nodes")
    pos = sub.index()
    nbrs = [[] for _ in range(n)]
    for u, v, w in sub.edges:
        c = _edge_cost(w, path_cost)
        nbrs[pos[u]].append((pos[v], c))
        nbrs[pos[v]].append((pos[u], c))
    total = 0.0
    for src in range(n):
        dist = [math.inf] * n
        dist[src] = 0.0
        heap = [(0.0, src)]
        done = 0
        while heap:
            d, i = heapq.heappop(heap)
            if d > dist[i]:
                continue
            done += 1
            for j, c in nbrs[i]:
                nd = d + c
                if nd < dist[j]:
                    dist[j] = nd
                    heapq.heappush(heap, (nd, j))
        if done < n:
            raise Disconnected("subgraph is not connected")
        total += math.fsum(dist)
    return total / (n * (n - 1))


def _label_lookup(labels, node_ids):
    if isinstance(labels, dict):
        return np.array([labels[int(v)] for v in node_ids])
    return np.asarray(labels)[node_ids]


def modularity(sub: WeightedGraph, labels) -> float:
    """Weighted Newman modularity of the partition induced by class labels.

    ``labels`` is indexed by node id (array) or keyed by node id (dict).
    """
    if sub.n_edges == 0:
        raise NoEdges("modularity is undefined without edges")
    lab = _label_lookup(labels, sub.node_ids)
    pos = sub.index()
    degree = np.zeros(sub.n_nodes)
    within = 0.0
    for u, v, w in sub.edges:
        degree[pos[u]] += w
        degree[pos[v]] += w
        if lab[pos[u]] == lab[pos[v]]:
            within += 2.0 * w
    two_m = degree.sum()
    expected = sum(degree[lab == c].sum() ** 2 for c in np.unique(lab)) / two_m
    return float((within - expected) / two_m)


def laplacian(sub: WeightedGraph) -> np.ndarray:
    a = sub.adjacency()
    return np.diag(a.sum(axis=1)) - a


def spectral_gap(sub: WeightedGraph) -> float:
    """Algebraic connectivity: second-smallest Laplacian eigenvalue."""
    if sub.n_nodes < 2:
        raise SingletonGraph("spectral gap needs at least 2 nodes")
    eig = np.linalg.eigvalsh(laplacian(sub))
    return float(max(eig[1], 0.0))


def subgraph_metrics(sub: WeightedGraph, labels, path_cost: str = "similarity") -> dict:
    """L, Q and Delta of one subgraph; NaN where a metric is undefined."""
    connected = sub.is_connected()
    out = {
        "nodes": sub.n_nodes,
        "edges": sub.n_edges,
        "connected": bool(connected and sub.n_nodes > 1),
        "cluster": int(getattr(sub, "parent_cluster", -1)),
        "L": float("nan"),
        "Q": float("nan"),
        "Delta": float("nan"),
    }
    if sub.n_nodes > 1 and connected:
        out["L"] = avg_shortest_path_length(sub, path_cost)
    if sub.n_edges > 0:
        out["Q"] = modularity(sub, labels)
    if sub.n_nodes > 1:
        out["Delta"] = spectral_gap(sub)
    return out


def _mean_or_nan(values, what, flags):
    values = [v for v in values if not math.isnan(v)]
    if not values:
        flags.append(f"no eligible subgraphs for {what}")
        return float("nan")
    return math.fsum(values) / len(values)


def aggregate_system_metrics(subs: list, labels, path_cost: str = "similarity",
                             per_subgraph: list | None = None) -> GraphMetrics:
    """System-level L_avg, Q_mod, Delta_spec, d_avg and small-world L.

    L_avg and Delta_spec average over connected subgraphs with more than one
    node, Q_mod over subgraphs with at least one edge. A mean with no eligible
    subgraph is NaN and recorded in ``flags``.
    """
    if not subs:
        raise ValueError("aggregate_system_metrics needs at least one subgraph")
    if per_subgraph is None:
        per_subgraph = [subgraph_metrics(s, labels, path_cost) for s in subs]
    flags = []
    conn = [p for p in per_subgraph if p["connected"]]
    L_avg = _mean_or_nan([p["L"] for p in conn], "L_avg", flags)
    Q_mod = _mean_or_nan([p["Q"] for p in per_subgraph if p["edges"] > 0], "Q_mod", flags)
    Delta_spec = _mean_or_nan([p["Delta"] for p in conn], "Delta_spec", flags)
    d_avg = math.fsum(2.0 * s.n_edges / s.n_nodes for s in subs) / len(subs)
    n_total = sum(s.n_nodes for s in subs)
    L_exp_sw = math.log(n_total) / math.log(d_avg) if d_avg > 1 else float("nan")
    return GraphMetrics(per_subgraph, L_avg, Q_mod, Delta_spec, d_avg, L_exp_sw, flags)


def augment_feature_matrix(matrix, metrics: GraphMetrics, node_to_subgraph, scope: str = "subgraph"):
    """Append graph_L, graph_Q, graph_gap columns.

    ``scope="global"`` appends the system-wide triple to every row.
    ``scope="subgraph"`` appends each row's own subgraph metrics, falling
    back to the system-wide value where the subgraph metric is undefined or
    the row maps to ``GLOBAL``.
    """
    if scope not in SCOPES:
        raise ConfigError(f"scope must be one of {SCOPES}, got {scope!r}")
    x = matrix.rows if isinstance(matrix, FeatureMatrix) else np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    n = x.shape[0]
    # a system mean with no eligible subgraph (flagged) contributes 0
    glob = np.nan_to_num(np.array(metrics.global_triple()), nan=0.0)
    extra = np.tile(glob, (n, 1))
    if scope == "subgraph":
        mapping = np.asarray(node_to_subgraph, dtype=int) if node_to_subgraph is not None else None
        if mapping is None or mapping.shape[0] != n:
            raise UnmappedRow("every row needs a subgraph mapping")
        if np.any(mapping < GLOBAL) or np.any(mapping >= len(metrics.per_subgraph)):
            bad = int(np.flatnonzero((mapping < GLOBAL) | (mapping >= len(metrics.per_subgraph)))[0])
            raise UnmappedRow(f"row {bad} maps to no subgraph")
        table = np.array([[p["L"], p["Q"], p["Delta"]] for p in metrics.per_subgraph]).reshape(-1, 3)
        table = np.where(np.isnan(table), glob, table)
        own = mapping >= 0
        extra[own] = table[mapping[own]]
    if isinstance(matrix, FeatureMatrix):
        return FeatureMatrix(
            np.hstack([x, extra]),
            list(matrix.names) + list(GRAPH_COLUMNS),
            matrix.labels,
            matrix.segment_meta,
            matrix.class_names,
        )
    return np.hstack([x, extra])


class GraphAugmenter:
    """Fit-on-some-rows, transform-any-rows wrapper around the graph stage.

    ``fit`` standardizes the base features, clusters them, builds the
    per-cluster kNN graphs and subgraph metrics. Rows seen in ``fit`` keep
    their own subgraph; new rows go to their nearest cluster and inherit the
    subgraph of the nearest fitted row in that cluster.
    """

    def __init__(self, k_max=5, n_max=200, tau_percentile=95.0, n_clusters=None, scope="subgraph",
                 path_cost="similarity", batch_size=256, max_iters=100, seed=0):
        if scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {scope!r}")
        if path_cost not in PATH_COSTS:
            raise ConfigError(f"path_cost must be one of {PATH_COSTS}, got {path_cost!r}")
        self.k_max = k_max
        self.n_max = n_max
        self.tau_percentile = tau_percentile
        self.n_clusters = n_clusters
        self.scope = scope
        self.path_cost = path_cost
        self.batch_size = batch_size
        self.max_iters = max_iters
        self.seed = seed

    def fit(self, rows, labels):
        x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        labels = np.asarray(labels, dtype=int)
        n = x.shape[0]
        self.standardizer_ = standardize_fit(x)
        xs = standardize_apply(x, self.standardizer_)
        k = self.n_clusters or default_n_clusters(n, self.n_max)
        k = min(k, n)
        self.clusters_ = minibatch_kmeans(xs, k, self.batch_size, self.max_iters, self.seed)
        subs = []
        for c in range(k):
            members = np.flatnonzero(self.clusters_.assignments == c)
            if members.size < 2:
                continue
            g = build_knn_graph(xs[members], self.k_max, self.tau_percentile, node_ids=members)
            subs.extend(split_subgraphs(g, self.n_max, parent_cluster=c))
        mapping = np.full(n, GLOBAL, dtype=int)
        for s, sub in enumerate(subs):
            mapping[sub.node_ids] = s
        if not subs:
            # every cluster is a singleton; keep one empty placeholder per row
            subs = [Subgraph(np.array([i]), [], int(self.clusters_.assignments[i])) for i in range(n)]
            mapping = np.arange(n)
        self.subgraphs_ = subs
        self.metrics_ = aggregate_system_metrics(subs, labels, self.path_cost)
        self.fit_rows_ = xs
        self.fit_mapping_ = mapping
        return self

    def map_rows(self, rows) -> np.ndarray:
        xs = standardize_apply(np.atleast_2d(np.asarray(rows, dtype=np.float64)), self.standardizer_)
        if xs.shape[1] != self.fit_rows_.shape[1]:
            raise DimensionMismatch("row width differs from the fitted feature width")
        cl = assign_clusters(self.clusters_, xs)
        out = np.full(xs.shape[0], GLOBAL, dtype=int)
        for c in np.unique(cl):
            members = np.flatnonzero(self.clusters_.assignments == c)
            rows_c = np.flatnonzero(cl == c)
            if members.size == 0:
                continue
            nearest = members[cdist(xs[rows_c], self.fit_rows_[members]).argmin(axis=1)]
            out[rows_c] = self.fit_mapping_[nearest]
        return out

    def transform(self, rows, fitted: bool = False):
        """Standardized rows plus the three graph columns.

        ``fitted=True`` means ``rows`` are exactly the rows given to ``fit``.
        """
        x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        mapping = self.fit_mapping_ if fitted else self.map_rows(x)
        xs = standardize_apply(x, self.standardizer_)
        return augment_feature_matrix(xs, self.metrics_, mapping, self.scope)

    def edges(self):
        for s, sub in enumerate(self.subgraphs_):
            for u, v, w in sub.edges:
                yield s, u, v, w


def write_edges_csv(subgraphs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "w", "subgraph"])
        for s, sub in enumerate(subgraphs):
            for u, v, wt in sub.edges:
                w.writerow([u, v, format(wt, ".17g"), s])


def graph_sweep_row(metrics: GraphMetrics, k_max, n_max, accuracy=None, seconds=None) -> dict:
    """Graph-parameter sweep row: k_max, N_max, L, Q, gap, accuracy, time."""
    return {
        "k_max": k_max,
        "N_max": n_max,
        "L": _json_float(metrics.L_avg),
        "Q": _json_float(metrics.Q_mod),
        "gap": _json_float(metrics.Delta_spec),
        "accuracy": accuracy,
        "time": seconds,
    }
