"""Discrete closed plane curves and their geometric primitives.

A curve is a closed polygon: an ordered list of vertices in R^2 where the
last vertex connects back to the first.  All quantities that downstream
modules need (length, per-segment frames, winding numbers, signed and
enclosed areas, self-intersections, pairwise separations, a discrete
bi-Lipschitz constant, and arclength resampling) live here as pure
functions of the vertex array.

Tangents and normals are per-segment (piecewise constant).  Winding
numbers are computed by summing signed turning angles, which rounds to an
exact integer without ray-casting tie-breaking.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

# Relative tolerance for "point lies on the curve" queries, scaled by the
# curve length so the predicate is invariant under rescaling.
ON_CURVE_RTOL = 1e-9

# Collinearity epsilon for the orientation predicates in the segment
# intersection tests (applied to cross products normalized by the segment
# length product).
COLLINEAR_EPS = 1e-12


class OnCurveError(ValueError):
    """A point query landed on (or numerically too close to) the curve."""


class WindingClassError(ValueError):
    """The curve has a winding number outside {0, 1} somewhere.

    Carries the offending point as ``witness``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class DiscreteCurve:
    """Closed polygon with an optional set of pinned (anchored) vertices.

    Parameters
    ----------
    vertices : (n, 2) float array
        Vertex positions in traversal order; vertex n-1 connects to 0.
    pinned : tuple of int
        Indices of vertices that constraint handling must not move.
    """

    vertices: np.ndarray
    pinned: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if v.shape[0] < 3:
            raise ValueError("a closed curve needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        seg = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths == 0.0):
            k = int(np.argmin(lengths))
            raise ValueError(f"zero-length segment at vertex {k}")
        pins = tuple(int(i) for i in self.pinned)
        if len(set(pins)) != len(pins):
            raise ValueError("pinned indices must be distinct")
        if pins and (min(pins) < 0 or max(pins) >= v.shape[0]):
            raise ValueError("pinned index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "pinned", pins)

    @property
    def n(self) -> int:
        return self.vertices.shape[0]

    def with_vertices(self, vertices, pinned=None) -> "DiscreteCurve":
        """New curve with replaced vertices (and optionally pins)."""
        return DiscreteCurve(vertices, self.pinned if pinned is None else pinned)


@dataclass(frozen=True)
class SegmentFrame:
    """Midpoint, unit tangent, unit normal (tangent rotated +pi/2), length."""

    midpoint: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    length: float


@dataclass(frozen=True)
class WindingReport:
    ok: bool
    witness: np.ndarray | None = None


def rot90(v: np.ndarray) -> np.ndarray:
    """Rotate vectors by +pi/2: (x, y) -> (-y, x).  Exact in floats."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def edges(curve: DiscreteCurve) -> np.ndarray:
    """Edge vectors, edge i running from vertex i to vertex i+1 (mod n)."""
    v = curve.vertices
    return np.roll(v, -1, axis=0) - v


def segment_lengths(curve: DiscreteCurve) -> np.ndarray:
    e = edges(curve)
    return np.hypot(e[:, 0], e[:, 1])


def curve_length(curve: DiscreteCurve) -> float:
    """Polygon length including the closing segment."""
    return float(segment_lengths(curve).sum())


def tangents(curve: DiscreteCurve) -> np.ndarray:
    e = edges(curve)
    return e / segment_lengths(curve)[:, None]


def midpoints(curve: DiscreteCurve) -> np.ndarray:
    v = curve.vertices
    return 0.5 * (v + np.roll(v, -1, axis=0))


def segment_frames(curve: DiscreteCurve) -> list[SegmentFrame]:
    """One frame per segment; the normal is the tangent rotated +pi/2."""
    t = tangents(curve)
    m = midpoints(curve)
    ln = segment_lengths(curve)
    nr = rot90(t)
    return [
        SegmentFrame(midpoint=m[i], tangent=t[i], normal=nr[i], length=float(ln[i]))
        for i in range(curve.n)
    ]


def signed_area(curve: DiscreteCurve) -> float:
    """Shoelace signed area: positive for counterclockwise traversal."""
    v = curve.vertices
    w = np.roll(v, -1, axis=0)
    return float(0.5 * np.sum(v[:, 0] * w[:, 1] - v[:, 1] * w[:, 0]))


def reverse(curve: DiscreteCurve) -> DiscreteCurve:
    """Orientation-reversed curve; pins follow their vertices."""
    n = curve.n
    order = np.arange(n - 1, -1, -1)
    pins = tuple(sorted(int(n - 1 - i) for i in curve.pinned))
    return DiscreteCurve(curve.vertices[order], pins)


def shift_start(curve: DiscreteCurve, k: int) -> DiscreteCurve:
    """Cyclically relabel vertices so old vertex k becomes vertex 0."""
    n = curve.n
    k = k % n
    pins = tuple(sorted((i - k) % n for i in curve.pinned))
    return DiscreteCurve(np.roll(curve.vertices, -k, axis=0), pins)


def regular_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> DiscreteCurve:
    """Counterclockwise regular n-gon inscribed in the given circle."""
    th = 2.0 * np.pi * np.arange(n) / n
    v = np.stack([np.cos(th), np.sin(th)], axis=1) * radius + np.asarray(center, dtype=float)
    return DiscreteCurve(v)


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distances from points to segments [a, b], broadcasting points x segments.

    Returns (dist, t) where t in [0, 1] is the clamped foot parameter.
    ``points`` is (k, 2); ``a`` and ``b`` are (m, 2).  Output is (k, m).
    """
    points = np.atleast_2d(points)
    d = b - a  # (m, 2)
    ls = np.einsum("ij,ij->i", d, d)  # squared lengths, > 0 by invariant
    w = points[:, None, :] - a[None, :, :]  # (k, m, 2)
    t = np.clip(np.einsum("kmj,mj->km", w, d) / ls[None, :], 0.0, 1.0)
    foot = a[None, :, :] + t[..., None] * d[None, :, :]
    diff = points[:, None, :] - foot
    return np.hypot(diff[..., 0], diff[..., 1]), t


def distance_to_curve(curve: DiscreteCurve, point) -> float:
    """Distance from a point to the polygon (as a 1-D set)."""
    p = np.asarray(point, dtype=float).reshape(1, 2)
    v = curve.vertices
    d, _ = point_segment_distance(p, v, np.roll(v, -1, axis=0))
    return float(d.min())


def winding_number(curve: DiscreteCurve, point) -> int:
    """Winding number of the curve around an off-curve point.

    Sums the signed angles subtended at the point by each segment.  The
    accumulated angle must land within 1e-9 * 2*pi of an integer multiple;
    points within ``ON_CURVE_RTOL * length`` of the curve are rejected.
    """
    x = np.asarray(point, dtype=float)
    tol = ON_CURVE_RTOL * curve_length(curve)
    if distance_to_curve(curve, x) <= tol:
        raise OnCurveError(f"point {x.tolist()} lies on the curve (tol={tol:g})")
    a = curve.vertices - x
    b = np.roll(a, -1, axis=0)
    ang = np.arctan2(
        a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0],
        a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1],
    )
    total = float(ang.sum()) / (2.0 * np.pi)
    w = int(np.rint(total))
    if abs(total - w) > 1e-9:
        raise OnCurveError(
            f"winding angle sum {total!r} too far from an integer; "
            "point is numerically on the curve"
        )
    return w


_PAIR_CACHE: dict = {}


def _nonadjacent_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j), i < j, of segments not sharing a vertex."""
    got = _PAIR_CACHE.get(n)
    if got is None:
        i, j = np.triu_indices(n, k=2)
        keep = ~((i == 0) & (j == n - 1))  # closing segment adjacency
        got = (i[keep], j[keep])
        _PAIR_CACHE[n] = got
    return got


def _segment_boxes(v: np.ndarray):
    w = np.roll(v, -1, axis=0)
    lo = np.minimum(v, w)
    hi = np.maximum(v, w)
    return lo, hi


def _box_gaps(lo, hi, i, j):
    """Componentwise bounding-box gaps for segment pairs (lower bound on
    the segment distance; zero when the boxes overlap)."""
    gx = np.maximum(lo[i, 0] - hi[j, 0], lo[j, 0] - hi[i, 0])
    gy = np.maximum(lo[i, 1] - hi[j, 1], lo[j, 1] - hi[i, 1])
    return np.maximum(gx, 0.0), np.maximum(gy, 0.0)


def _segment_pair_closest(p1, d1, q1, d2):
    """Closest-point parameters and distance for segment arrays.

    Segments are p1 + s*d1 and q1 + t*d2 with s, t clamped to [0, 1].
    All inputs are (m, 2); returns (dist, s, t) of shape (m,).
    """
    r = p1 - q1
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    b = np.einsum("ij,ij->i", d1, d2)
    c = np.einsum("ij,ij->i", d1, r)
    f = np.einsum("ij,ij->i", d2, r)
    denom = a * e - b * b
    s = np.where(denom > 0.0, np.clip((b * f - c * e) / np.where(denom > 0, denom, 1.0), 0.0, 1.0), 0.0)
    t = (b * s + f) / e
    tc = np.clip(t, 0.0, 1.0)
    # if t was clamped, recompute s for the clamped t
    s = np.where(t != tc, np.clip((b * tc - c) / a, 0.0, 1.0), s)
    diff = (p1 + s[:, None] * d1) - (q1 + tc[:, None] * d2)
    return np.hypot(diff[:, 0], diff[:, 1]), s, tc


def self_intersections(curve: DiscreteCurve) -> list[tuple[int, int, np.ndarray]]:
    """All intersections between non-adjacent segments.

    Touching counts as an intersection; collinear overlaps report the
    midpoint of the overlap.  Pairs sharing a vertex are excluded.  Output
    is sorted by (i, j).
    """
    v = curve.vertices
    n = curve.n
    e = np.roll(v, -1, axis=0) - v
    i, j = _nonadjacent_pairs(n)
    if i.size == 0:
        return []
    # bounding-box prefilter: disjoint boxes cannot intersect
    lo, hi = _segment_boxes(v)
    gx, gy = _box_gaps(lo, hi, i, j)
    near = (gx <= 0.0) & (gy <= 0.0)
    i, j = i[near], j[near]
    if i.size == 0:
        return []
    p, r = v[i], e[i]
    q, s = v[j], e[j]
    qp = q - p
    denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    tnum = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
    unum = qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]
    lr = np.hypot(r[:, 0], r[:, 1])
    ls = np.hypot(s[:, 0], s[:, 1])
    parallel = np.abs(denom) <= COLLINEAR_EPS * lr * ls

    out: list[tuple[int, int, np.ndarray]] = []

    # transversal (and touching) crossings
    gen = ~parallel
    if np.any(gen):
        t = np.where(gen, tnum / np.where(gen, denom, 1.0), -1.0)
        u = np.where(gen, unum / np.where(gen, denom, 1.0), -1.0)
        eps = COLLINEAR_EPS
        hit = gen & (t >= -eps) & (t <= 1 + eps) & (u >= -eps) & (u <= 1 + eps)
        for k in np.nonzero(hit)[0]:
            pt = p[k] + np.clip(t[k], 0.0, 1.0) * r[k]
            out.append((int(i[k]), int(j[k]), pt))

    # collinear overlaps
    col = parallel & (np.abs(unum) <= COLLINEAR_EPS * np.hypot(qp[:, 0], qp[:, 1]) * lr + 0.0)
    if np.any(col):
        rr = np.einsum("ij,ij->i", r, r)
        t0 = np.einsum("ij,ij->i", qp, r) / rr
        t1 = t0 + np.einsum("ij,ij->i", s, r) / rr
        lo = np.maximum(0.0, np.minimum(t0, t1))
        hi = np.minimum(1.0, np.maximum(t0, t1))
        hit = col & (lo <= hi + COLLINEAR_EPS)
        for k in np.nonzero(hit)[0]:
            tm = 0.5 * (lo[k] + hi[k])
            out.append((int(i[k]), int(j[k]), p[k] + tm * r[k]))

    out.sort(key=lambda rec: (rec[0], rec[1]))
    return out


def min_nonadjacent_separation(curve: DiscreteCurve) -> float:
    """Minimum distance between all pairs of non-adjacent segments."""
    v = curve.vertices
    n = curve.n
    e = np.roll(v, -1, axis=0) - v
    i, j = _nonadjacent_pairs(n)
    if i.size == 0:
        return float("inf")
    # seed an upper bound from next-nearest pairs, then prune by box gaps
    ii = np.arange(n)
    jj = (ii + 2) % n
    d0, _, _ = _segment_pair_closest(v[ii], e[ii], v[jj], e[jj])
    ub = float(d0.min())
    lo, hi = _segment_boxes(v)
    gx, gy = _box_gaps(lo, hi, i, j)
    near = (gx * gx + gy * gy) < ub * ub
    if np.any(near):
        d, _, _ = _segment_pair_closest(v[i[near]], e[i[near]], v[j[near]], e[j[near]])
        ub = min(ub, float(d.min()))
    return ub


def check_winding_class(curve: DiscreteCurve, sample_budget: int = 512) -> WindingReport:
    """Verify that winding numbers lie in {0, 1} everywhere off the curve.

    Embedded curves are decided by orientation alone (counterclockwise
    interior has winding 1).  Otherwise one representative point per face
    of the segment arrangement is sampled: each segment is split at its
    intersection points and the midpoints of the resulting subsegments are
    offset to both sides by 10x the on-curve tolerance.
    """
    inter = self_intersections(curve)
    if not inter:
        if signed_area(curve) >= 0.0:
            return WindingReport(ok=True)
        # clockwise embedded loop: interior winding is -1
        witness = _interior_sample(curve)
        return WindingReport(ok=False, witness=witness)

    v = curve.vertices
    e = np.roll(v, -1, axis=0) - v
    ln = np.hypot(e[:, 0], e[:, 1])
    nr = rot90(e / ln[:, None])
    tol = ON_CURVE_RTOL * float(ln.sum())
    off = 10.0 * tol

    splits: dict[int, list[float]] = {}
    for si, sj, pt in inter:
        for seg in (si, sj):
            d = pt - v[seg]
            t = float(np.dot(d, e[seg]) / np.dot(e[seg], e[seg]))
            splits.setdefault(seg, []).append(min(1.0, max(0.0, t)))

    samples = []
    for seg in range(curve.n):
        ts = sorted(set([0.0, 1.0] + splits.get(seg, [])))
        for a, b in zip(ts[:-1], ts[1:]):
            if (b - a) * ln[seg] <= 2.0 * off:
                continue
            mid = v[seg] + 0.5 * (a + b) * e[seg]
            samples.append(mid + off * nr[seg])
            samples.append(mid - off * nr[seg])
    if len(samples) > sample_budget:
        idx = np.linspace(0, len(samples) - 1, sample_budget).astype(int)
        samples = [samples[k] for k in idx]

    for pt in samples:
        try:
            w = winding_number(curve, pt)
        except OnCurveError:
            continue
        if w not in (0, 1):
            return WindingReport(ok=False, witness=np.asarray(pt))
    return WindingReport(ok=True)


def _interior_sample(curve: DiscreteCurve) -> np.ndarray:
    """A point inside an embedded curve (offset from a segment midpoint)."""
    v = curve.vertices
    e = np.roll(v, -1, axis=0) - v
    ln = np.hypot(e[:, 0], e[:, 1])
    k = int(np.argmax(ln))
    nr = rot90(e[k] / ln[k])
    sgn = 1.0 if signed_area(curve) >= 0 else -1.0
    step = 1e-3 * float(ln.sum())
    mid = v[k] + 0.5 * e[k]
    for _ in range(20):
        pt = mid + sgn * step * nr
        try:
            if winding_number(curve, pt) != 0:
                return pt
        except OnCurveError:
            pass
        step *= 0.5
    return mid + sgn * step * nr


def enclosed_area(curve: DiscreteCurve, sample_budget: int = 512) -> float:
    """Area of the winding-1 region; requires winding numbers in {0, 1}.

    Equals the shoelace area whenever the winding class holds, since the
    signed area integrates the winding number over the plane.
    """
    report = check_winding_class(curve, sample_budget)
    if not report.ok:
        raise WindingClassError(
            "winding number outside {0, 1}", witness=report.witness
        )
    return max(signed_area(curve), 0.0)


def arclength_params(curve: DiscreteCurve) -> np.ndarray:
    """Vertex parameters in [0, 1) under the constant-speed convention."""
    ln = segment_lengths(curve)
    total = ln.sum()
    return np.concatenate([[0.0], np.cumsum(ln)[:-1]]) / total


def vertex_normals(curve: DiscreteCurve) -> np.ndarray:
    """Unit vertex normals: bisectors of the two adjacent segment normals.

    Degenerate bisectors (anti-parallel adjacent segments) give a zero
    vector, which simply exempts that vertex from normal-offset moves.
    """
    v = curve.vertices
    e = np.roll(v, -1, axis=0) - v
    ln = np.hypot(e[:, 0], e[:, 1])
    nr = rot90(e / ln[:, None])
    b = nr + np.roll(nr, 1, axis=0)
    norm = np.hypot(b[:, 0], b[:, 1])
    safe = np.where(norm > 1e-12, norm, 1.0)
    out = b / safe[:, None]
    out[norm <= 1e-12] = 0.0
    return out


def bilipschitz_constant(curve: DiscreteCurve) -> float:
    """Discrete bi-Lipschitz lower bound min |c(s)-c(t)| / d(s,t).

    Parameters are arclength fractions on R/Z with circular distance.
    The minimum is taken over all vertex pairs plus the closest-point
    pairs of every non-adjacent segment pair (the latter catch
    mid-segment near-contacts that vertex pairs can miss).
    """
    v = curve.vertices
    n = curve.n
    params = arclength_params(curve)
    ratios = []

    iu, ju = np.triu_indices(n, k=1)
    chord = np.hypot(v[iu, 0] - v[ju, 0], v[iu, 1] - v[ju, 1])
    dt = np.abs(params[iu] - params[ju])
    dt = np.minimum(dt, 1.0 - dt)
    ok = dt > 0
    ratios.append(chord[ok] / dt[ok])

    e = np.roll(v, -1, axis=0) - v
    ln = segment_lengths(curve)
    total = ln.sum()
    i, j = _nonadjacent_pairs(n)
    if i.size:
        d, s, t = _segment_pair_closest(v[i], e[i], v[j], e[j])
        ps = params[i] + s * ln[i] / total
        pt = params[j] + t * ln[j] / total
        dtau = np.abs(ps - pt)
        dtau = np.minimum(dtau, 1.0 - dtau)
        ok = dtau > 0
        ratios.append(d[ok] / dtau[ok])

    return float(np.concatenate(ratios).min())


def resample_constant_speed(curve: DiscreteCurve, n_target: int) -> DiscreteCurve:
    """Redistribute vertices uniformly by arclength, holding pins fixed.

    Each arc between consecutive pinned vertices is resampled to uniform
    spacing on its own; pinned vertices are kept bit-exact.  Without pins,
    vertex 0 is kept as the anchor.  All new vertices lie on the old
    polyline, so the length never increases.
    """
    need = max(3, len(curve.pinned) + 1)
    if n_target < need:
        raise ValueError(f"n_target={n_target} too small; need at least {need}")

    v = curve.vertices
    n = curve.n
    anchors = sorted(curve.pinned) if curve.pinned else [0]
    pinned_out = bool(curve.pinned)

    ln = segment_lengths(curve)

    # arcs[k] = list of vertex indices from anchor k up to (not incl.) next anchor
    arcs = []
    arc_lengths = []
    m = len(anchors)
    for k in range(m):
        a = anchors[k]
        b = anchors[(k + 1) % m]
        idx = []
        i = a
        while True:
            idx.append(i)
            i = (i + 1) % n
            if i == b:
                break
            if i == a:  # single-anchor loop wraps fully
                break
        arcs.append(idx)
        arc_lengths.append(float(ln[idx].sum()))

    total = sum(arc_lengths)
    # distribute n_target segment pieces over arcs proportionally (>= 1 each)
    quota = [length / total * n_target for length in arc_lengths]
    counts = [max(1, int(np.floor(q))) for q in quota]
    while sum(counts) > n_target:
        k = int(np.argmax([c - q for c, q in zip(counts, quota)]))
        if counts[k] <= 1:
            raise ValueError("n_target too small for the pinned arcs")
        counts[k] -= 1
    rema = [q - c for q, c in zip(quota, counts)]
    while sum(counts) < n_target:
        k = int(np.argmax(rema))
        counts[k] += 1
        rema[k] -= 1.0

    new_vertices = []
    new_pins = []
    for arc_idx, arc_len, pieces in zip(arcs, arc_lengths, counts):
        start = len(new_vertices)
        if pinned_out:
            new_pins.append(start)
        new_vertices.append(v[arc_idx[0]])
        # cumulative lengths along this arc's old segments
        seg_len = ln[arc_idx]
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        targets = arc_len * np.arange(1, pieces) / pieces
        pos = np.searchsorted(cum, targets, side="right") - 1
        pos = np.clip(pos, 0, len(arc_idx) - 1)
        for target, p in zip(targets, pos):
            local = (target - cum[p]) / seg_len[p]
            a = v[arc_idx[p]]
            b = v[(arc_idx[p] + 1) % n]
            new_vertices.append(a + local * (b - a))
    return DiscreteCurve(np.array(new_vertices), tuple(new_pins))


def save_curve(curve: DiscreteCurve, path) -> None:
    """Write the plain-text curve format: one "x y" per line, 17 digits.

    Pinned indices go into an optional leading "# pinned: i1 i2 ..." line.
    """
    lines = []
    if curve.pinned:
        lines.append("# pinned: " + " ".join(str(i) for i in curve.pinned))
    for x, y in curve.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_curve(path) -> DiscreteCurve:
    """Read the plain-text curve format written by :func:`save_curve`."""
    pinned: tuple = ()
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("pinned:"):
                    pinned = tuple(int(tok) for tok in body[len("pinned:"):].split())
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"malformed curve line: {line!r}")
            rows.append((float(parts[0]), float(parts[1])))
    return DiscreteCurve(np.array(rows, dtype=float), pinned)
