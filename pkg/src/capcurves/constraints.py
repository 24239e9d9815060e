"""Admissibility constraints: pinned points, winding class, enclosed area.

Pins are enforced exactly by anchoring vertices (splitting a segment where
necessary); the area constraint is enforced by a closed-form projection
that moves every unpinned vertex a common distance along its vertex
normal, where the shoelace area is quadratic in that distance; the
winding-class condition is checked, not enforced (the optimizer rejects
steps that break it).  A tube-shaped initializer produces feasible
starting curves for any pin set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import (
    DiscreteCurve,
    vertex_normals,
    check_winding_class,
    enclosed_area,
    point_segment_distance,
    resample_constant_speed,
    rot90,
    self_intersections,
    signed_area,
)


class PinPlacementError(ValueError):
    """Pins could not be anchored to distinct vertices."""


class ProjectionRangeError(ValueError):
    """The area projection would move vertices too far; take smaller steps."""


class InfeasibleCurveError(ValueError):
    """A curve failed the feasibility requirements of an operation."""


@dataclass(frozen=True)
class ConstraintSpec:
    """Pinned points, target enclosed area, and tolerances.

    ``tol_pin`` is absolute; ``tol_area`` is relative to epsilon.
    """

    pins: np.ndarray
    epsilon: float
    tol_pin: float = 1e-9
    tol_area: float = 1e-8

    def __post_init__(self):
        pins = np.asarray(self.pins, dtype=float)
        if pins.ndim != 2 or pins.shape[1] != 2 or pins.shape[0] < 2:
            raise ValueError("pins must be an (N, 2) array with N >= 2")
        d = pins[:, None, :] - pins[None, :, :]
        dist = np.hypot(d[..., 0], d[..., 1])
        np.fill_diagonal(dist, np.inf)
        if dist.min() == 0.0:
            raise ValueError("pins must be distinct")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        for name in ("tol_pin", "tol_area"):
            t = getattr(self, name)
            if not 0.0 < t <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2]")
        object.__setattr__(self, "pins", pins)

    @property
    def n_pins(self) -> int:
        return self.pins.shape[0]


def attach_pins(curve: DiscreteCurve, spec: ConstraintSpec) -> DiscreteCurve:
    """Anchor each pin to the curve: split or reuse the nearest vertex.

    The chosen vertex is moved onto the pin exactly and marked pinned, so
    the output always has zero pin residual.
    """
    v = curve.vertices
    n = curve.n
    seg_a = v
    seg_b = np.roll(v, -1, axis=0)
    dist, t = point_segment_distance(spec.pins, seg_a, seg_b)

    # (segment, parameter, pin index); snap near-vertex feet to vertices
    slots: list[tuple[int, float, int]] = []
    occupied: set[tuple[int, float]] = set()
    for k in range(spec.n_pins):
        seg = int(np.argmin(dist[k]))
        tk = float(t[k, seg])
        if tk > 1.0 - 1e-12:
            seg, tk = (seg + 1) % n, 0.0
        if tk < 1e-12:
            tk = 0.0
        key = (seg, round(tk, 12))
        if key in occupied:
            raise PinPlacementError(
                f"pins {spec.pins[k].tolist()} and an earlier pin map to the same "
                "curve vertex; refine the curve first"
            )
        occupied.add(key)
        slots.append((seg, tk, k))

    slots.sort()
    new_vertices: list[np.ndarray] = []
    new_pins: list[int] = list()
    old_pins = set(curve.pinned)
    pos = 0
    by_segment: dict[int, list[tuple[float, int]]] = {}
    for seg, tk, k in slots:
        by_segment.setdefault(seg, []).append((tk, k))

    for i in range(n):
        inserts = sorted(by_segment.get(i, []))
        vertex_taken = False
        if inserts and inserts[0][0] == 0.0:
            # reuse vertex i: move it onto the pin
            _, k = inserts.pop(0)
            new_vertices.append(spec.pins[k].copy())
            new_pins.append(pos)
            vertex_taken = True
        else:
            new_vertices.append(v[i])
            if i in old_pins:
                new_pins.append(pos)
        pos += 1
        for _, k in inserts:
            new_vertices.append(spec.pins[k].copy())
            new_pins.append(pos)
            pos += 1
        if vertex_taken and i in old_pins and pos - 1 not in new_pins:
            pass  # original pin mark superseded by the new anchor
    return DiscreteCurve(np.array(new_vertices), tuple(sorted(set(new_pins))))


def pin_residual(curve: DiscreteCurve, spec: ConstraintSpec) -> float:
    """Max distance from each pin to its anchor (or to the curve if unanchored)."""
    if curve.pinned:
        anchors = curve.vertices[list(curve.pinned)]
        d = spec.pins[:, None, :] - anchors[None, :, :]
        dist = np.hypot(d[..., 0], d[..., 1]).min(axis=1)
        return float(dist.max())
    v = curve.vertices
    dist, _ = point_segment_distance(spec.pins, v, np.roll(v, -1, axis=0))
    return float(dist.min(axis=1).max())


def area_residual(curve: DiscreteCurve, spec: ConstraintSpec) -> float:
    """Enclosed area minus the target epsilon (winding class must hold)."""
    return enclosed_area(curve) - spec.epsilon


def project_area(curve: DiscreteCurve, spec: ConstraintSpec) -> DiscreteCurve:
    """Move unpinned vertices a common distance along vertex normals so the
    shoelace area hits epsilon exactly.

    The area along this one-parameter family is the quadratic
    A(t) = A0 + B t + C t^2; the real root of smaller magnitude is used.
    """
    v = curve.vertices
    d = vertex_normals(curve)
    if curve.pinned:
        d[list(curve.pinned)] = 0.0

    a0 = signed_area(curve)
    target = spec.epsilon
    dn = np.roll(d, -1, axis=0)
    vn = np.roll(v, -1, axis=0)
    b = 0.5 * np.sum(
        d[:, 0] * vn[:, 1] - d[:, 1] * vn[:, 0] + v[:, 0] * dn[:, 1] - v[:, 1] * dn[:, 0]
    )
    c = 0.5 * np.sum(d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0])

    gap = a0 - target
    diam = float(np.ptp(curve.vertices, axis=0).max())
    if abs(gap) <= spec.tol_area * target * 1e-6:
        return curve
    if abs(c) < 1e-300:
        if abs(b) < 1e-300:
            raise ProjectionRangeError(
                "no movable vertices act on the area (all pinned or degenerate)"
            )
        t = -gap / b
    else:
        disc = b * b - 4.0 * c * gap
        if disc < 0.0:
            raise ProjectionRangeError("area projection has no real solution")
        sq = np.sqrt(disc)
        roots = ((-b + sq) / (2.0 * c), (-b - sq) / (2.0 * c))
        t = min(roots, key=abs)
    if abs(t) > 0.1 * diam:
        raise ProjectionRangeError(
            f"area projection needs |t|={abs(t):.3g} > 0.1*diameter={0.1 * diam:.3g}; "
            "take smaller optimizer steps"
        )
    return curve.with_vertices(v + t * d)


def _order_pins(pins: np.ndarray) -> np.ndarray:
    """Visit order for the tube centerline: angular about the centroid,
    falling back to projection order when the pins are collinear."""
    centroid = pins.mean(axis=0)
    rel = pins - centroid
    # collinearity via the smaller singular value of the spread
    svals = np.linalg.svd(rel, compute_uv=False)
    span = float(np.hypot(rel[:, 0], rel[:, 1]).max())
    if svals[-1] <= 1e-9 * max(span, 1.0):
        direction = np.linalg.svd(rel, full_matrices=False)[2][0]
        order = np.argsort(rel @ direction, kind="stable")
    else:
        order = np.argsort(np.arctan2(rel[:, 1], rel[:, 0]), kind="stable")
    return pins[order]


def _arc_points(center, start, end, ccw: bool, k: int) -> np.ndarray:
    """Points along a circular arc from start to end about center."""
    r = np.hypot(*(start - center))
    a0 = np.arctan2(start[1] - center[1], start[0] - center[0])
    a1 = np.arctan2(end[1] - center[1], end[0] - center[0])
    if ccw:
        while a1 <= a0:
            a1 += 2.0 * np.pi
    else:
        while a1 >= a0:
            a1 -= 2.0 * np.pi
    angles = np.linspace(a0, a1, k + 1)
    return center + r * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _offset_side(chain: np.ndarray, w: float, arc_pts: int) -> list:
    """Offset polyline at distance w on the right-hand side of an oriented
    chain, traversed forward.  Right turns get miters (inner side), left
    turns get counterclockwise arcs (outer side), so concatenating the
    forward and reversed chains' sides yields a counterclockwise tube."""
    seg = chain[1:] - chain[:-1]
    ln = np.hypot(seg[:, 0], seg[:, 1])
    tau = seg / ln[:, None]
    eta = rot90(tau)
    pts = [chain[0] - w * eta[0]]
    for k in range(len(tau) - 1):
        corner = chain[k + 1]
        cr = tau[k][0] * tau[k + 1][1] - tau[k][1] * tau[k + 1][0]
        if cr > 1e-12:
            # chain turns left: the right side is outer, round it
            arc = _arc_points(corner, corner - w * eta[k], corner - w * eta[k + 1], True, max(2, arc_pts // 2))
            pts.extend(arc[1:])
        elif cr < -1e-12:
            # chain turns right: the right side is inner, miter it
            p1, d1 = pts[-1], tau[k]
            p2, d2 = corner - w * eta[k + 1], tau[k + 1]
            den = d1[0] * d2[1] - d1[1] * d2[0]
            t = ((p2 - p1)[0] * d2[1] - (p2 - p1)[1] * d2[0]) / den
            pts.append(p1 + t * d1)
        else:
            pts.append(corner - w * eta[k])
    pts.append(chain[-1] - w * eta[-1])
    return pts


def _tube_polygon(chain: np.ndarray, w: float, arc_pts: int = 24) -> np.ndarray:
    """Counterclockwise boundary of the half-width-w tube around an open chain."""
    side_a = _offset_side(chain, w, arc_pts)
    side_b = _offset_side(chain[::-1], w, arc_pts)
    end_cap = _arc_points(chain[-1], side_a[-1], side_b[0], True, arc_pts)
    start_cap = _arc_points(chain[0], side_b[-1], side_a[0], True, arc_pts)

    pts = side_a + list(end_cap[1:-1]) + side_b + list(start_cap[1:-1])
    out = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - out[-1])) > 1e-14:
            out.append(p)
    if np.hypot(*(out[0] - out[-1])) <= 1e-14:
        out.pop()
    return np.array(out)


def _ribbon_polygon(chain: np.ndarray, d: float, arc_pts: int = 24) -> np.ndarray:
    """Counterclockwise ribbon between the chain and a one-sided offset.

    One wall of the ribbon is the pin chain itself, so every pin is a
    polygon vertex with a wide wedge angle; the other wall is the offset
    polyline, and the two are closed by straight end edges.  The offset
    goes on the outside of the chain's turns, where the joins are round
    arcs; the inside would need miters, which spike out at sharp corners.
    """
    seg = chain[1:] - chain[:-1]
    turn = 0.0
    for k in range(len(seg) - 1):
        turn += seg[k][0] * seg[k + 1][1] - seg[k][1] * seg[k + 1][0]
    if turn >= 0.0:
        # left-turning chain: offset on the right side, then flip to CCW
        side = _offset_side(chain, d, arc_pts)
        pts = [np.asarray(q, dtype=float) for q in chain] + side[::-1]
        ccw = False
    else:
        # right-turning chain: the reversed chain turns left
        side = _offset_side(chain[::-1], d, arc_pts)
        pts = [np.asarray(q, dtype=float) for q in chain] + side
        ccw = True
    out = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - out[-1])) > 1e-14:
            out.append(p)
    if np.hypot(*(out[0] - out[-1])) <= 1e-14:
        out.pop()
    arr = np.array(out)
    return arr if ccw else arr[::-1]


def _attach_disk(vertices: np.ndarray, apex_idx: int, direction: np.ndarray, area: float, k: int = 64) -> np.ndarray:
    """Insert a counterclockwise circle of the given area touching the
    polygon at vertex ``apex_idx`` and lying in ``direction`` from it."""
    apex = vertices[apex_idx]
    r = np.sqrt(area / np.pi)
    center = apex + r * direction
    phi0 = np.arctan2(apex[1] - center[1], apex[0] - center[0])
    ang = phi0 + 2.0 * np.pi * np.arange(k) / k
    disk = center + r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    disk[0] = apex
    return np.concatenate(
        [vertices[: apex_idx + 1], disk[1:], [apex], vertices[apex_idx + 1 :]]
    )


def initial_curve(spec: ConstraintSpec, n: int) -> DiscreteCurve:
    """Feasible embedded starting curve: a thin ribbon along the pin chain.

    One wall of the ribbon is the chain through the pins (in angular order
    about their centroid), so every pin lies on the boundary at a wide
    wedge; the other wall is the chain offset sideways by a width chosen
    so the enclosed area comes out near epsilon.  The boundary is then
    anchored to the pins, projected to the exact area, and resampled to n
    near-uniform vertices.  If the required width would exceed a quarter
    of the pin spacing the width is capped and the remaining area is
    supplied by a disk attached at the first pin (with a warning).
    """
    if n < 16 * spec.n_pins:
        raise ValueError(f"n={n} too small; need at least {16 * spec.n_pins}")

    chain = _order_pins(spec.pins)
    seg = chain[1:] - chain[:-1]
    lchain = float(np.hypot(seg[:, 0], seg[:, 1]).sum())

    w_area = spec.epsilon / lchain
    pd = spec.pins[:, None, :] - spec.pins[None, :, :]
    pdist = np.hypot(pd[..., 0], pd[..., 1])
    np.fill_diagonal(pdist, np.inf)
    w_cap = float(pdist.min()) / 4.0
    w = min(w_area, w_cap)
    degraded = w_area > w_cap

    poly = None
    for _ in range(8):
        cand = _ribbon_polygon(chain, w)
        if len(cand) >= 3 and not self_intersections(DiscreteCurve(cand)):
            poly = cand
            break
        w *= 0.5
        degraded = True
    if poly is None:
        raise InfeasibleCurveError("could not build an embedded ribbon along the pins")

    tube_area = signed_area(DiscreteCurve(poly))
    if degraded and tube_area < spec.epsilon * (1.0 - 1e-6):
        warnings.warn(
            "ribbon width capped by pin spacing; remaining area supplied by a "
            "disk attached at the first pin",
            stacklevel=2,
        )
        # grow the disk away from the chain, beyond its first vertex
        direction = (chain[0] - chain[1]) / np.hypot(*(chain[0] - chain[1]))
        poly = _attach_disk(poly, 0, direction, spec.epsilon - tube_area)

    curve = DiscreteCurve(poly)
    curve = attach_pins(curve, spec)
    curve = project_area(curve, spec)
    curve = resample_constant_speed(curve, n)
    curve = project_area(curve, spec)

    report = check_winding_class(curve)
    if not report.ok:
        raise InfeasibleCurveError("initializer produced a winding-class violation")
    if pin_residual(curve, spec) > spec.tol_pin:
        raise InfeasibleCurveError("initializer failed to anchor the pins")
    return curve
