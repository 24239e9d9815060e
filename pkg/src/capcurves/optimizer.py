"""Constrained minimization of the curve objective.

Projected gradient descent with Armijo backtracking runs inside an
augmented-Lagrangian outer loop for the area equality constraint.  Pins
are held fixed (their gradient rows are zeroed), the area is restored
after every accepted step by the closed-form normal projection, and steps
whose result leaves the winding class {0, 1} are rejected outright.
Because the projection keeps the residual at zero, the multiplier is
re-estimated each outer phase by least squares against the current
gradient rather than from the residual.

The descent direction is the tangentially projected gradient, optionally
smoothed by a cyclic Laplacian solve (a Sobolev-type inner product).  The
smoothing removes the mesh-scale step-size cap of the raw flow without
introducing curvature information; convergence is still measured on the
raw augmented gradient.  Candidates that would compress a segment below a
fixed fraction of the mean spacing are rejected: collapsing a segment
deletes its pair terms from the quadrature, which would otherwise let the
discrete energy leak through near-contacts.  Every accepted candidate is
the *projected* point, so accepted augmented objective values decrease
monotonically within each fixed-multiplier phase by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSpec, ProjectionRangeError, pin_residual, project_area
from .energy import (
    CollapsedCurveError,
    EnergyBreakdown,
    EnergyParams,
    area_gradient,
    length_gradient,
    nonlocal_energy,
    nonlocal_value_and_gradient,
)
from .geometry import (
    DiscreteCurve,
    vertex_normals,
    check_winding_class,
    curve_length,
    min_nonadjacent_separation,
    resample_constant_speed,
    signed_area,
)

logger = logging.getLogger(__name__)

HISTORY_HEADER = "iter,total,length,nonlocal,area_res,pin_res,min_sep"

# Candidates may not compress any segment below this fraction of the mean
# segment length (see module docstring).
SEGMENT_FLOOR = 0.2


@dataclass(frozen=True)
class OptimizerConfig:
    max_outer: int = 8
    max_inner: int = 200
    step0: float = 1.0
    armijo_c: float = 0.2
    shrink: float = 0.5
    grad_tol: float = 1e-3
    resample_every: int = 25
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    seed: int = 0
    smoothing: float = 0.0625  # Laplacian smoothing scale as a fraction of n

    def __post_init__(self):
        if min(self.max_outer, self.max_inner, self.resample_every) <= 0:
            raise ValueError("iteration counts must be positive")
        if min(self.step0, self.grad_tol, self.penalty0) <= 0.0:
            raise ValueError("step0, grad_tol, penalty0 must be positive")
        if not 0.0 < self.armijo_c < 0.5:
            raise ValueError("armijo_c must lie in (0, 0.5)")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty_growth must exceed 1")
        if self.smoothing < 0.0:
            raise ValueError("smoothing must be >= 0")


@dataclass
class OptimizeResult:
    final: DiscreteCurve
    breakdown: EnergyBreakdown
    history: list = field(default_factory=list)
    status: str = "max-iterations"
    iterations: int = 0

    def history_csv(self) -> str:
        rows = [HISTORY_HEADER]
        for rec in self.history:
            rows.append(",".join(f"{x:.17g}" if isinstance(x, float) else str(x) for x in rec))
        return "\n".join(rows) + "\n"


def _free_mask(curve: DiscreteCurve) -> np.ndarray:
    mask = np.ones((curve.n, 1))
    if curve.pinned:
        mask[list(curve.pinned)] = 0.0
    return mask


def _objective_value(curve: DiscreteCurve, params: EnergyParams) -> float:
    val = curve_length(curve)
    if params.delta != 0.0:
        val += params.delta * nonlocal_energy(curve, params)
    return val


def _objective_value_and_gradient(curve: DiscreteCurve, params: EnergyParams):
    val = curve_length(curve)
    grad = length_gradient(curve)
    if params.delta != 0.0:
        g_val, g_grad = nonlocal_value_and_gradient(curve, params)
        val += params.delta * g_val
        grad = grad + params.delta * g_grad
    return val, grad


def _augmented_of(value: float, area_res: float, multiplier: float, penalty: float) -> float:
    return value + multiplier * area_res + 0.5 * penalty * area_res * area_res


def _lsq_multiplier(curve: DiscreteCurve, params: EnergyParams, grad=None) -> float:
    """Least-squares multiplier estimate from stationarity.

    The projection keeps the area residual at zero, so the classical
    residual-driven multiplier update never moves; instead the multiplier
    solving min ||grad E + mu grad A||^2 over the unpinned vertices is
    used at the start of each outer phase.
    """
    free = _free_mask(curve)
    if grad is None:
        _, grad = _objective_value_and_gradient(curve, params)
    ge = (grad * free).ravel()
    ga = (area_gradient(curve) * free).ravel()
    denom = float(ga @ ga)
    if denom <= 0.0:
        return 0.0
    return float(-(ge @ ga) / denom)


def _smooth_cyclic(g: np.ndarray, sigma: float) -> np.ndarray:
    """Solve (I - sigma^2 D2) d = g on the cyclic index grid via FFT.

    D2 is the second-difference operator; sigma is measured in vertex
    index units.  This damps mesh-scale modes of the direction without
    changing the set of stationary points.
    """
    if sigma <= 0.0:
        return g
    n = g.shape[0]
    k = np.arange(n // 2 + 1)
    symbol = 1.0 + sigma * sigma * (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n))
    out = np.empty_like(g)
    for c in range(2):
        out[:, c] = np.fft.irfft(np.fft.rfft(g[:, c]) / symbol, n)
    return out


class _StepWorkspace:
    """Per-iterate pieces shared by the trial loop: objective value and
    gradient, tangential gradient, direction, Armijo slope, segment floor,
    and the augmented value at the base point.

    The direction is restricted to per-vertex normal motion: tangential
    components only reparametrize the polygon (and in the length term they
    drain vertices into kinks), so shape evolution happens normally and
    the periodic resampling owns the redistribution.
    """

    def __init__(self, curve, params, spec, multiplier, penalty, sigma):
        value, grad = _objective_value_and_gradient(curve, params)
        self.value = value
        self.raw_grad = grad
        r = signed_area(curve) - spec.epsilon
        self.area_res = r
        free = _free_mask(curve)
        m = (grad + (multiplier + penalty * r) * area_gradient(curve)) * free
        a = area_gradient(curve) * free
        asq = float(np.sum(a * a))
        if asq > 0.0:
            m = m - (float(np.sum(m * a)) / asq) * a
        self.grad = m
        self.grad_norm = float(np.linalg.norm(m))

        nrm = vertex_normals(curve)
        mn = np.einsum("ik,ik->i", m, nrm)[:, None] * nrm * free
        self.normal_grad_norm = float(np.linalg.norm(mn))
        d = _smooth_cyclic(m, sigma * curve.n if sigma > 0 else 0.0)
        d = np.einsum("ik,ik->i", d, nrm)[:, None] * nrm
        d = d * free
        if asq > 0.0:
            d = d - (float(np.sum(d * a)) / asq) * a
        slope = float(np.sum(m * d))
        dn = float(np.linalg.norm(d))
        if slope <= 0.1 * self.normal_grad_norm * dn:
            # smoothing misaligned the direction; fall back to the plain
            # normal component of the gradient
            d = mn.copy()
            if asq > 0.0:
                d = d - (float(np.sum(d * a)) / asq) * a
            slope = float(np.sum(m * d))
        self.direction = -d
        self.slope = -slope
        self.phi0 = _augmented_of(value, r, multiplier, penalty)
        seg = np.roll(curve.vertices, -1, axis=0) - curve.vertices
        ln = np.hypot(seg[:, 0], seg[:, 1])
        # a step may compress the shortest segment a little, but the mesh
        # may not jump below the healthy floor in one move
        self.seg_floor = min(SEGMENT_FLOOR * float(ln.mean()), 0.95 * float(ln.min()))


def _candidate_valid(vertices: np.ndarray, floor: float = 0.0) -> bool:
    seg = np.roll(vertices, -1, axis=0) - vertices
    return bool(np.all(np.hypot(seg[:, 0], seg[:, 1]) > floor))


def _trial(curve, params, spec, multiplier, penalty, step, ws, armijo_c):
    """Try one projected step; returns (curve, value) or None."""
    cand_v = curve.vertices + step * ws.direction
    if not _candidate_valid(cand_v, ws.seg_floor):
        return None
    try:
        cand = project_area(curve.with_vertices(cand_v), spec)
    except (ProjectionRangeError, ValueError):
        return None
    if not _candidate_valid(cand.vertices, ws.seg_floor):
        return None
    try:
        value = _objective_value(cand, params)
    except CollapsedCurveError:
        return None
    r = signed_area(cand) - spec.epsilon
    phi1 = _augmented_of(value, r, multiplier, penalty)
    if not np.isfinite(phi1) or phi1 > ws.phi0 + armijo_c * step * ws.slope:
        return None
    if not check_winding_class(cand).ok:
        return None
    return cand, value


def descent_step(curve: DiscreteCurve, params: EnergyParams, spec: ConstraintSpec,
                 multiplier: float, penalty: float, step: float,
                 armijo_c: float = 0.2, shrink: float = 0.5, smoothing: float = 0.0):
    """One Armijo-backtracked trial on the augmented objective.

    The step direction is the tangentially projected gradient (smoothed
    when ``smoothing`` > 0); the candidate is projected back onto the area
    constraint before the Armijo test, pinned vertices never move, and a
    candidate that breaks the winding class is rejected.  Returns
    (curve, accepted, step) where a rejection returns the shrunk step.
    """
    ws = _StepWorkspace(curve, params, spec, multiplier, penalty, smoothing)
    if ws.grad_norm == 0.0:
        return curve, True, step
    hit = _trial(curve, params, spec, multiplier, penalty, step, ws, armijo_c)
    if hit is None:
        return curve, False, step * shrink
    return hit[0], True, step


def _stationary(curve: DiscreteCurve, params: EnergyParams, spec: ConstraintSpec,
                penalty: float, grad_tol: float) -> bool:
    """First-order test on the admissible motions at a feasible point."""
    r = signed_area(curve) - spec.epsilon
    if abs(r) > spec.tol_area * spec.epsilon:
        return False
    try:
        ws = _StepWorkspace(curve, params, spec,
                            _lsq_multiplier(curve, params), penalty, 0.0)
    except CollapsedCurveError:
        return False
    return ws.normal_grad_norm <= grad_tol * (1.0 + abs(ws.value))


def minimize(curve0: DiscreteCurve, params: EnergyParams, spec: ConstraintSpec,
             cfg: OptimizerConfig) -> OptimizeResult:
    """Minimize the objective over the constrained class from a feasible start."""
    if pin_residual(curve0, spec) > spec.tol_pin:
        raise ValueError("starting curve does not satisfy the pin constraint")
    curve = curve0
    r0 = signed_area(curve) - spec.epsilon
    if abs(r0) > spec.tol_area * spec.epsilon:
        curve = project_area(curve, spec)

    diam = float(np.ptp(curve.vertices, axis=0).max())
    step = cfg.step0
    history: list = []
    accepted_total = 0
    first_trial_streak = 0
    since_resample = 0
    status = "max-iterations"

    def record(it):
        bd = _breakdown(curve, params)
        history.append(
            (
                it,
                bd.total,
                bd.length_term,
                bd.nonlocal_term,
                signed_area(curve) - spec.epsilon,
                pin_residual(curve, spec),
                min_nonadjacent_separation(curve),
            )
        )

    record(0)

    done = False
    for outer in range(cfg.max_outer):
        multiplier = _lsq_multiplier(curve, params)
        penalty = cfg.penalty0 * cfg.penalty_growth ** outer
        inner_accepted = 0
        while inner_accepted < cfg.max_inner:
            try:
                ws = _StepWorkspace(curve, params, spec, multiplier, penalty, cfg.smoothing)
            except CollapsedCurveError:
                status = "infeasible-step"
                done = True
                break
            if ws.normal_grad_norm <= cfg.grad_tol * (1.0 + abs(ws.value)):
                break

            accepted = False
            first_trial = True
            while step >= 1e-14 * diam:
                hit = _trial(curve, params, spec, multiplier, penalty, step, ws, cfg.armijo_c)
                if hit is not None:
                    curve = hit[0]
                    accepted = True
                    break
                step *= cfg.shrink
                first_trial = False

            if not accepted:
                if _stationary(curve, params, spec, penalty, cfg.grad_tol):
                    status = "converged"
                else:
                    status = "infeasible-step"
                done = True
                break

            accepted_total += 1
            inner_accepted += 1
            since_resample += 1
            record(accepted_total)

            if first_trial:
                first_trial_streak += 1
                if first_trial_streak >= 2:
                    step = min(step * 1.5, cfg.step0)
                    first_trial_streak = 0
            else:
                first_trial_streak = 0

            if since_resample >= cfg.resample_every:
                since_resample = 0
                curve = _maybe_resample(curve, params, spec)

        if done:
            break
        # convergence is judged with a freshly fitted multiplier and on the
        # admissible motions (normal components of unpinned vertices,
        # tangent to the area constraint): tangential components are pure
        # reparametrizations, excluded by the constant-speed surrogate
        if _stationary(curve, params, spec, penalty, cfg.grad_tol):
            status = "converged"
            break

    bd = _breakdown(curve, params)
    return OptimizeResult(final=curve, breakdown=bd, history=history, status=status,
                          iterations=accepted_total)


def _breakdown(curve: DiscreteCurve, params: EnergyParams) -> EnergyBreakdown:
    length = curve_length(curve)
    try:
        g = nonlocal_energy(curve, params)
    except CollapsedCurveError:
        g = float("inf")
    return EnergyBreakdown(length_term=length, nonlocal_term=g,
                           total=length + params.delta * g if np.isfinite(g) else float("inf"))


def _maybe_resample(curve: DiscreteCurve, params: EnergyParams, spec: ConstraintSpec) -> DiscreteCurve:
    """Constant-speed resample followed by reprojection.

    A resample that breaks feasibility or jolts the energy by more than 1%
    (which happens when the mesh no longer resolves a near-contact) is a
    logged failure and is skipped; the run continues on the old mesh.
    """
    try:
        before = _objective_value(curve, params)
    except CollapsedCurveError:
        return curve
    try:
        cand = resample_constant_speed(curve, curve.n)
        cand = project_area(cand, spec)
    except (ProjectionRangeError, ValueError):
        logger.info("resample skipped: projection failed after resampling")
        return curve
    if not check_winding_class(cand).ok:
        logger.info("resample skipped: winding class violated")
        return curve
    try:
        after = _objective_value(cand, params)
    except CollapsedCurveError:
        logger.info("resample skipped: collapsed configuration")
        return curve
    if abs(after - before) > 0.01 * max(abs(before), 1e-300):
        logger.info(
            "resample skipped: energy change %.3g exceeds 1%%",
            abs(after - before) / max(abs(before), 1e-300),
        )
        return curve
    return cand
