"""APLS: average path length similarity between two line graphs."""
from __future__ import annotations

import itertools

import networkx as nx
import numpy as np

from ..geometry import point_segment_distance

SNAP_EPS = 1e-9


def build_graph(instances, raster_size: int, classes=(1, 2)) -> nx.Graph:
    """Nodes are key points (pixel units), edges join consecutive points.

    Coincident key points of different instances become one node so that
    touching roads connect.
    """
    G = nx.Graph()
    index = {}
    for v in instances:
        if v.class_id not in classes or v.kind.closed:
            continue
        ids = []
        for x, y in v.xy * raster_size:
            key = (round(float(x), 9), round(float(y), 9))
            if key not in index:
                index[key] = len(index)
                G.add_node(index[key], pos=(float(x), float(y)))
            ids.append(index[key])
        for a, b in zip(ids[:-1], ids[1:]):
            if a != b:
                pa, pb = np.array(G.nodes[a]["pos"]), np.array(G.nodes[b]["pos"])
                G.add_edge(a, b, length=float(np.hypot(*(pa - pb))))
    return G


def _snap(G: nx.Graph, point, radius: float):
    """Node of ``G`` at the projection of ``point`` onto its nearest edge.

    The edge is split when the projection falls strictly inside it.
    Returns None when no edge lies within ``radius``.
    """
    edges = list(G.edges())
    if not edges:
        return None
    A = np.array([G.nodes[u]["pos"] for u, _ in edges])
    B = np.array([G.nodes[v]["pos"] for _, v in edges])
    p = np.asarray(point, dtype=float)
    d = point_segment_distance(p[None], A, B)
    k = int(np.argmin(d))
    if d[k] > radius:
        return None
    u, v = edges[k]
    a, b = A[k], B[k]
    ab = b - a
    t = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
    length = G.edges[u, v]["length"]
    if t * length <= SNAP_EPS:
        return u
    if (1.0 - t) * length <= SNAP_EPS:
        return v
    node = ("snap", G.number_of_nodes())
    q = a + t * ab
    G.remove_edge(u, v)
    G.add_node(node, pos=(float(q[0]), float(q[1])))
    G.add_edge(u, node, length=float(np.hypot(*(q - a))))
    G.add_edge(node, v, length=float(np.hypot(*(b - q))))
    return node


def _pairs(G: nx.Graph, n_samples, rng):
    pairs = []
    for comp in nx.connected_components(G):
        pairs.extend(itertools.combinations(sorted(comp, key=str), 2))
    pairs.sort(key=str)
    if len(pairs) > n_samples:
        pick = rng.choice(len(pairs), size=n_samples, replace=False)
        pairs = [pairs[i] for i in sorted(pick)]
    return pairs


def directional_score(src: nx.Graph, dst: nx.Graph, n_samples=200, seed=0, snap_radius=10.0) -> float:
    """1 - mean relative path-length error for node pairs of ``src`` mapped onto ``dst``."""
    rng = np.random.default_rng(seed)
    pairs = _pairs(src, n_samples, rng)
    if not pairs:
        return 1.0
    target = dst.copy()
    snapped = {}
    for node in sorted({n for pr in pairs for n in pr}, key=str):
        snapped[node] = _snap(target, src.nodes[node]["pos"], snap_radius)
    src_len, dst_len = {}, {}
    penalties = []
    for a, b in pairs:
        if a not in src_len:
            src_len[a] = nx.single_source_dijkstra_path_length(src, a, weight="length")
        L = src_len[a][b]
        a2, b2 = snapped[a], snapped[b]
        if a2 is None or b2 is None or L <= 0:
            penalties.append(1.0)
            continue
        if a2 not in dst_len:
            dst_len[a2] = nx.single_source_dijkstra_path_length(target, a2, weight="length")
        L2 = dst_len[a2].get(b2)
        if L2 is None:
            penalties.append(1.0)
        else:
            penalties.append(min(1.0, abs(L - L2) / L))
    return float(1.0 - np.mean(penalties))


def apls(pred_instances, gt_instances, raster_size: int, n_samples: int = 200, seed: int = 0,
         snap_radius: float = 10.0, classes=(1, 2)) -> float:
    """Harmonic mean of the GT->prediction and prediction->GT path scores."""
    gp = build_graph(pred_instances, raster_size, classes)
    gg = build_graph(gt_instances, raster_size, classes)
    if gg.number_of_edges() == 0 and gp.number_of_edges() == 0:
        return 1.0
    s1 = directional_score(gg, gp, n_samples, seed, snap_radius)
    s2 = directional_score(gp, gg, n_samples, seed, snap_radius)
    if s1 + s2 <= 0:
        return 0.0
    return float(2 * s1 * s2 / (s1 + s2))
