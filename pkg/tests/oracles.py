"""Independent reference implementations used as test oracles.

Nothing here calls the functions under test. The algorithms are chosen to
be obviously correct rather than fast: exhaustive enumeration, explicit
loops, dense sampling, finite differences and third-party geometry.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from shapely.geometry import LineString, Point, Polygon


# -- resampling ---------------------------------------------------------------

def walk_resample(points, closed, M):
    """Uniform samples by stepping along the path edge by edge in pure Python."""
    pts = [tuple(map(float, p)) for p in points]
    if closed:
        pts = pts + [pts[0]]
    lengths = [math.dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]
    total = sum(lengths)
    step = total / M if closed else total / (M - 1)
    out = []
    for m in range(M):
        target = total if (not closed and m == M - 1) else m * step
        acc = 0.0
        for i, L in enumerate(lengths):
            if target <= acc + L or i == len(lengths) - 1:
                f = (target - acc) / L
                (x0, y0), (x1, y1) = pts[i], pts[i + 1]
                out.append((x0 + f * (x1 - x0), y0 + f * (y1 - y0)))
                break
            acc += L
    return np.array(out)


def canonical(points, closed):
    """Top-left start, clockwise (positive shoelace) for closed rings."""
    pts = [tuple(map(float, p)) for p in points]
    if not closed:
        return pts
    start = min(range(len(pts)), key=lambda i: (pts[i][1], pts[i][0]))
    pts = pts[start:] + pts[:start]
    if shoelace(pts) < 0:
        pts = [pts[0]] + pts[:0:-1]
    return pts


def snapped_resample(points, closed, M):
    """Uniform samples with each key point replacing a sample.

    Key points go to distinct samples in order, minimizing the summed
    arc-length distance; ties resolve to the lexicographically smallest
    choice. Found by enumeration, so keep ``M`` small.
    Returns ``(samples, flags)``.
    """
    pts = canonical(points, closed)
    samples = walk_resample(pts, closed, M)
    ring = pts + [pts[0]] if closed else pts
    key_arc = [0.0]
    for i in range(len(pts) - 1):
        key_arc.append(key_arc[-1] + math.dist(ring[i], ring[i + 1]))
    total = sum(math.dist(ring[i], ring[i + 1]) for i in range(len(ring) - 1))
    t = [m * total / M if closed else m * total / (M - 1) for m in range(M)]
    if not closed:
        t[-1] = total
    best = None
    for assignment in itertools.combinations(range(M), len(pts)):
        cost = sum(abs(key_arc[i] - t[j]) for i, j in enumerate(assignment))
        if best is None or cost < best[0]:
            best = (cost, assignment)
    flags = np.zeros(M, dtype=bool)
    for i, j in enumerate(best[1]):
        samples[j] = pts[i]
        flags[j] = True
    return samples, flags


def shoelace(points):
    s = 0.0
    n = len(points)
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return s / 2.0


# -- matching -------------------------------------------------------------------

def match_cost(P, c, G, assignment, match_point=1.0, match_prob=1.0):
    total = 0.0
    for i, j in enumerate(assignment):
        total += match_point * (abs(G[i][0] - P[j][0]) + abs(G[i][1] - P[j][1])) + match_prob * abs(1.0 - c[j])
    return total / len(assignment)


def brute_match(P, c, G, closed, monotone=True, match_point=1.0, match_prob=1.0):
    """Exhaustive key-point matching.

    Returns ``(cost, assignment, orientation)``. Ties prefer the forward
    orientation, then the lexicographically smallest assignment.
    """
    P = np.asarray(P, dtype=float)
    G = np.asarray(G, dtype=float)
    M, T = len(P), len(G)
    cands = [("forward", G)] if closed else [("forward", G), ("reversed", G[::-1])]
    best = None
    for name, g in cands:
        maps = itertools.combinations(range(M), T) if monotone else itertools.permutations(range(M), T)
        for assignment in sorted(maps):
            cost = match_cost(P, c, g, assignment, match_point, match_prob)
            if best is None or cost < best[0]:
                best = (cost, assignment, name)
    return best


# -- losses ---------------------------------------------------------------------

def vsl_value(P, c, G, assignment, closed, w_dir, w_kp, w_cls):
    """Shape loss at a fixed alignment, written from the definitions."""
    T, M = len(G), len(P)
    Pk = [P[j] for j in assignment]
    n_edges = T if closed else T - 1
    dir_sum = 0.0
    for i in range(n_edges):
        a = np.subtract(Pk[(i + 1) % T], Pk[i])
        b = np.subtract(G[(i + 1) % T], G[i])
        na, nb = math.hypot(*a), math.hypot(*b)
        if na > 0 and nb > 0:
            dir_sum += 1.0 - float(np.dot(a, b)) / (na * nb)
        else:
            dir_sum += 1.0
    l_dir = dir_sum / n_edges
    l_kp = sum(abs(Pk[i][0] - G[i][0]) + abs(Pk[i][1] - G[i][1]) for i in range(T)) / T
    matched = set(assignment)
    l_cls = 0.0
    for j in range(M):
        p = min(max(c[j], 1e-7), 1 - 1e-7)
        l_cls += -math.log(p) if j in matched else -math.log(1 - p)
    l_cls /= M
    return w_dir * l_dir + w_kp * l_kp + w_cls * l_cls


def central_diff(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


# -- polygon metrics --------------------------------------------------------------

def polis_shapely(A, B):
    ra, rb = Polygon(A).exterior, Polygon(B).exterior
    da = sum(rb.distance(Point(p)) for p in A) / len(A)
    db = sum(ra.distance(Point(p)) for p in B) / len(B)
    return da / 2 + db / 2


def polis_dense(A, B, n=4000):
    """PoLiS with boundaries replaced by ``n`` samples per edge."""
    def boundary(P):
        P = np.asarray(P, dtype=float)
        Q = np.roll(P, -1, axis=0)
        t = np.linspace(0, 1, n, endpoint=False)[:, None, None]
        return (P[None] + t * (Q - P)[None]).reshape(-1, 2)

    def side(X, Y):
        bY = boundary(Y)
        return np.mean([np.min(np.hypot(*(bY - x).T)) for x in np.asarray(X, dtype=float)])

    return side(A, B) / 2 + side(B, A) / 2


def _clip(subject, a, b):
    def inside(p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0

    def cross(p, q):
        dx1, dy1 = q[0] - p[0], q[1] - p[1]
        dx2, dy2 = b[0] - a[0], b[1] - a[1]
        den = dx1 * dy2 - dy1 * dx2
        t = ((a[0] - p[0]) * dy2 - (a[1] - p[1]) * dx2) / den
        return (p[0] + t * dx1, p[1] + t * dy1)

    out = []
    for i in range(len(subject)):
        p, q = subject[i - 1], subject[i]
        if inside(q):
            if not inside(p):
                out.append(cross(p, q))
            out.append(q)
        elif inside(p):
            out.append(cross(p, q))
    return out


def convex_iou(A, B):
    """Sutherland-Hodgman IoU for convex polygons (any orientation)."""
    A = [tuple(p) for p in A]
    B = [tuple(p) for p in B]
    if shoelace(A) < 0:
        A = A[::-1]
    if shoelace(B) < 0:
        B = B[::-1]
    inter = A
    for i in range(len(B)):
        if not inter:
            break
        inter = _clip(inter, B[i], B[(i + 1) % len(B)])
    ia = abs(shoelace(inter)) if len(inter) >= 3 else 0.0
    ua = abs(shoelace(A)) + abs(shoelace(B)) - ia
    return ia / ua if ua > 0 else 0.0


def raster_iou(A, B, res=1000):
    """IoU from point-in-polygon tests on a res x res grid of cell centers."""
    from matplotlib.path import Path

    g = (np.arange(res) + 0.5) / res
    X, Y = np.meshgrid(g, g)
    pts = np.c_[X.ravel(), Y.ravel()]
    a = Path(np.asarray(A)).contains_points(pts)
    b = Path(np.asarray(B)).contains_points(pts)
    u = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / u if u else 0.0


# -- AP -------------------------------------------------------------------------------

def _iou(a, b):
    pa, pb = Polygon(a), Polygon(b)
    u = pa.union(pb).area
    return pa.intersection(pb).area / u if u > 0 else 0.0


def coco_ap_reference(pred_scenes, gt_scenes, thresholds=None, max_dets=100):
    """Plain-loop COCO AP over polygon classes.

    Per image, detections in descending score order each take the free GT
    with the highest IoU at or above the threshold (later GT wins ties, as
    in the COCO evaluator). Across images, detections are ranked by score
    (stable in image order) and precision is interpolated at 101 recall
    levels as the best precision at any rank reaching that recall.
    """
    if thresholds is None:
        thresholds = [0.5 + 0.05 * i for i in range(10)]
    preds = {s.image_id: s for s in pred_scenes}
    gts = {s.image_id: s for s in gt_scenes}
    ids = sorted(set(preds) | set(gts))
    classes = sorted({v.class_id for s in gt_scenes for v in s.instances if v.kind.value == "polygon"})
    per_class = []
    for cls in classes:
        aps = []
        for thr in thresholds:
            rows, n_gt = [], 0
            for iid in ids:
                g = [v for v in (gts[iid].instances if iid in gts else ()) if v.class_id == cls and v.kind.value == "polygon"]
                d = [v for v in (preds[iid].instances if iid in preds else ()) if v.class_id == cls and v.kind.value == "polygon"]
                d = sorted(d, key=lambda v: -v.score)[:max_dets]
                n_gt += len(g)
                free = [True] * len(g)
                for det in d:
                    best, best_iou = -1, min(thr, 1 - 1e-10)
                    for k, gt in enumerate(g):
                        if not free[k]:
                            continue
                        iou = _iou(det.points, gt.points)
                        if iou >= best_iou:
                            best, best_iou = k, iou
                    if best >= 0:
                        free[best] = False
                    rows.append((det.score, best >= 0))
            if n_gt == 0:
                break
            rows = sorted(rows, key=lambda r: -r[0])
            tp = 0
            curve = []
            for k, (_, hit) in enumerate(rows):
                tp += hit
                curve.append((tp / n_gt, tp / (k + 1)))
            total = 0.0
            for r in range(101):
                level = r / 100
                ps = [p for rc, p in curve if rc >= level - 1e-12]
                total += max(ps) if ps else 0.0
            aps.append(total / 101)
        if aps:
            per_class.append(sum(aps) / len(aps))
    return sum(per_class) / len(per_class) if per_class else float("nan")


# -- pixels ---------------------------------------------------------------------------

def pixel_prf_brute(P, G, tol):
    """Precision/recall/F1 from all pairwise pixel distances."""
    p = np.argwhere(P)
    g = np.argwhere(G)
    if len(p) == 0 or len(g) == 0:
        prec = 1.0 if len(p) == 0 else 0.0
        rec = 1.0 if len(g) == 0 else 0.0
    else:
        d = np.hypot(p[:, None, 0] - g[None, :, 0], p[:, None, 1] - g[None, :, 1])
        prec = float(np.mean(d.min(axis=1) <= tol))
        rec = float(np.mean(d.min(axis=0) <= tol))
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return prec, rec, f1


def line_length(points):
    return LineString(points).length
