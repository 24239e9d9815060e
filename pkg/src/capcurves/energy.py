"""The nonlocal curve energy, its gradient, and refinement diagnostics.

The nonlocal term is a double sum over segment pairs of

    |tau_i - tau_j|^p / |m_i - m_j|^(1 + s*p) * l_i * l_j

with midpoints m, unit tangents tau, and segment lengths l, skipping a
cyclic band of ``exclusion_width`` neighbors around the diagonal (the
continuum integrand vanishes there for smooth curves; the band keeps the
discrete sum finite).  The full objective adds the curve length with the
nonlocal term weighted by delta.

The gradient is the exact derivative of the discrete sum with respect to
the vertex positions, not a discretized continuum variation, so descent
on the computed objective is guaranteed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DiscreteCurve, curve_length, rot90


class CollapsedCurveError(ValueError):
    """Two non-excluded segment midpoints coincide; the sum is infinite."""


@dataclass(frozen=True)
class EnergyParams:
    """Exponents (s, p), weight delta, and the diagonal exclusion band."""

    s: float = 0.6
    p: float = 2.0
    delta: float = 1e-3
    exclusion_width: int = 1

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.p < 1.0:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.exclusion_width < 1:
            raise ValueError("exclusion_width must be >= 1")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def regime(self) -> str:
        if self.sp > 1.0:
            return "non-collapsing"
        if self.sp == 1.0:
            return "mobius-critical"
        return "collapsing-permissive"


@dataclass(frozen=True)
class EnergyBreakdown:
    length_term: float
    nonlocal_term: float
    total: float


_MASK_CACHE: dict = {}
_TRIU_CACHE: dict = {}


def _exclusion_mask(n: int, width: int) -> np.ndarray:
    key = (n, width)
    got = _MASK_CACHE.get(key)
    if got is None:
        idx = np.arange(n)
        d = np.abs(idx[:, None] - idx[None, :])
        cyc = np.minimum(d, n - d)
        got = cyc > width
        got.setflags(write=False)
        _MASK_CACHE[key] = got
    return got


def _triu_indices(n: int):
    got = _TRIU_CACHE.get(n)
    if got is None:
        got = np.triu_indices(n, k=1)
        _TRIU_CACHE[n] = got
    return got


def _segment_data(curve: DiscreteCurve):
    v = curve.vertices
    e = np.roll(v, -1, axis=0) - v
    ln = np.hypot(e[:, 0], e[:, 1])
    t = e / ln[:, None]
    m = 0.5 * (v + np.roll(v, -1, axis=0))
    return e, ln, t, m


def pair_term_matrix(curve: DiscreteCurve, params: EnergyParams, use_normals: bool = False) -> np.ndarray:
    """Symmetric matrix of pair terms, zero on the excluded band.

    With ``use_normals`` the tangents are replaced by their +pi/2
    rotations; since rotation is an isometry this changes nothing and is
    exposed only as a diagnostic.
    """
    _, ln, t, m = _segment_data(curve)
    n = curve.n
    mask = _exclusion_mask(n, params.exclusion_width)

    field = rot90(t) if use_normals else t
    du = field[:, None, :] - field[None, :, :]
    a2 = du[..., 0] ** 2 + du[..., 1] ** 2
    dm = m[:, None, :] - m[None, :, :]
    dist2 = dm[..., 0] ** 2 + dm[..., 1] ** 2

    if np.any(mask & (dist2 == 0.0)):
        raise CollapsedCurveError(
            "coincident segment midpoints outside the exclusion band"
        )

    num = a2 if params.p == 2.0 else a2 ** (params.p / 2.0)
    safe2 = np.where(mask, dist2, 1.0)
    kern = safe2 ** (-(1.0 + params.sp) / 2.0)
    w = np.where(mask, num * kern * (ln[:, None] * ln[None, :]), 0.0)
    return w


def nonlocal_energy(curve: DiscreteCurve, params: EnergyParams) -> float:
    """The discrete double sum over ordered segment pairs."""
    w = pair_term_matrix(curve, params)
    iu, ju = _triu_indices(curve.n)
    return float(2.0 * w[iu, ju].sum())


def total_energy(curve: DiscreteCurve, params: EnergyParams) -> EnergyBreakdown:
    """Length plus delta times the nonlocal term."""
    length = curve_length(curve)
    g = nonlocal_energy(curve, params)
    return EnergyBreakdown(length_term=length, nonlocal_term=g, total=length + params.delta * g)


def mobius_e1(curve: DiscreteCurve, exclusion_width: int = 1) -> float:
    """First term of the knot-energy decomposition, with its 1/2 factor.

    Coincides with half the nonlocal sum at (s, p) = (1/2, 2) under the
    same quadrature and exclusion band.
    """
    params = EnergyParams(s=0.5, p=2.0, delta=0.0, exclusion_width=exclusion_width)
    return 0.5 * nonlocal_energy(curve, params)


def length_gradient(curve: DiscreteCurve) -> np.ndarray:
    """Gradient of the polygon length with respect to vertex positions."""
    _, _, t, _ = _segment_data(curve)
    # d(l_i)/d(v_i) = -t_i, d(l_i)/d(v_{i+1}) = +t_i
    return np.roll(t, 1, axis=0) - t


def area_gradient(curve: DiscreteCurve) -> np.ndarray:
    """Gradient of the shoelace signed area: 0.5 * (v_{k-1} - v_{k+1}) rotated."""
    v = curve.vertices
    return 0.5 * rot90(np.roll(v, 1, axis=0) - np.roll(v, -1, axis=0))


def nonlocal_value_and_gradient(curve: DiscreteCurve, params: EnergyParams):
    """Nonlocal energy and its exact vertex gradient in a single pass."""
    _, ln, t, m = _segment_data(curve)
    n = curve.n
    p, sp = params.p, params.sp
    mask = _exclusion_mask(n, params.exclusion_width)

    du = t[:, None, :] - t[None, :, :]
    a2 = du[..., 0] ** 2 + du[..., 1] ** 2
    dm = m[:, None, :] - m[None, :, :]
    dist2 = dm[..., 0] ** 2 + dm[..., 1] ** 2
    if np.any(mask & (dist2 == 0.0)):
        raise CollapsedCurveError(
            "coincident segment midpoints outside the exclusion band"
        )

    safe2 = np.where(mask, dist2, 1.0)
    num = a2 if p == 2.0 else a2 ** (p / 2.0)
    kern = safe2 ** (-(1.0 + sp) / 2.0)
    ll = ln[:, None] * ln[None, :]
    w = np.where(mask, num * kern * ll, 0.0)
    iu, ju = _triu_indices(n)
    value = float(2.0 * w[iu, ju].sum())

    # d|u|^p/du = p |u|^(p-2) u ; zero at u = 0 for p > 1
    if p == 2.0:
        afac = np.where(mask, 2.0, 0.0)
    else:
        a2safe = np.where(a2 > 0.0, a2, 1.0)
        afac = np.where(mask & (a2 > 0.0), p * a2safe ** (p / 2.0 - 1.0), 0.0)
    # per-segment accumulations; factor 2 counts both orderings of each pair
    kern_ll = kern * ll
    gT = 2.0 * np.einsum("ij,ijk->ik", afac * kern_ll, du)
    gM = 2.0 * np.einsum(
        "ij,ijk->ik", np.where(mask, -(1.0 + sp) * num * kern_ll / safe2, 0.0), dm
    )
    gL = 2.0 * (np.where(mask, num * kern, 0.0) @ ln)

    # chain rule onto the two vertices of each segment:
    #   tangent t = e/l with dt/de = (I - t t^T)/l, length dl/de = t,
    #   midpoint dm/dv_i = dm/dv_{i+1} = 1/2; segment i touches vertices
    #   i and i+1, so the accumulation is a roll, not a scatter.
    ht = (gT - np.einsum("ik,ik->i", gT, t)[:, None] * t) / ln[:, None]
    hl = gL[:, None] * t
    at_i = -(ht + hl) + 0.5 * gM
    at_ip1 = (ht + hl) + 0.5 * gM
    grad = at_i + np.roll(at_ip1, 1, axis=0)
    return value, grad


def nonlocal_gradient(curve: DiscreteCurve, params: EnergyParams) -> np.ndarray:
    """Exact gradient of :func:`nonlocal_energy` in the vertex positions."""
    return nonlocal_value_and_gradient(curve, params)[1]


def energy_gradient(curve: DiscreteCurve, params: EnergyParams) -> np.ndarray:
    """Gradient of the total objective (length + delta * nonlocal)."""
    grad = length_gradient(curve)
    if params.delta != 0.0:
        grad = grad + params.delta * nonlocal_gradient(curve, params)
    return grad


@dataclass(frozen=True)
class RefinementStudy:
    """Energies per refinement level with a growth-exponent fit.

    ``exponent_estimate`` is b in value ~ h^(-b) for mesh width h = l/n,
    fitted by least squares on the log of successive differences; negative
    values indicate convergence at rate h^(-b).
    """

    levels: tuple
    values: tuple
    exponent_estimate: float

    def csv_rows(self) -> list[str]:
        rows = ["n,value,exponent_estimate"]
        for n, val in zip(self.levels, self.values):
            rows.append(f"{n},{val:.17g},{self.exponent_estimate:.17g}")
        return rows


def fit_growth_exponent(ns, values, lengths=None) -> float:
    """Exponent b with value ~ h^(-b), from successive differences.

    Differences between consecutive levels isolate the h-dependent part of
    the sum; their log-log slope against the finer mesh width gives b.
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if lengths is None:
        lengths = np.ones_like(ns)
    else:
        lengths = np.asarray(lengths, dtype=float)
    h = lengths / ns
    diffs = np.abs(np.diff(values))
    hf = h[1:]
    ok = diffs > 0
    if ok.sum() < 2:
        return 0.0
    slope = np.polyfit(np.log(hf[ok]), np.log(diffs[ok]), 1)[0]
    return float(-slope)


def refinement_study(shape, params: EnergyParams, levels) -> RefinementStudy:
    """Evaluate the nonlocal energy of shape(n) across refinement levels."""
    values = []
    lengths = []
    for n in levels:
        curve = shape(int(n))
        values.append(nonlocal_energy(curve, params))
        lengths.append(curve_length(curve))
    b = fit_growth_exponent(levels, values, lengths)
    return RefinementStudy(levels=tuple(int(n) for n in levels), values=tuple(values), exponent_estimate=b)
