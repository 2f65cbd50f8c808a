"""Billiard integration: flow, wall-crossing detection, elastic reflection.

The flow is integrated with an adaptive embedded Runge-Kutta scheme of
order 8(5,3) (scipy's DOP853) in the native representation: 2D chart
coordinates for the plane, ambient 3-space with per-step constraint
re-projection for the curved spaces (ambient second derivative
``q'' = F(q) -+ <q', q'> q`` with the metric-appropriate pairing).

Wall crossings are flagged by sign changes of the member implicit values
along dense output and refined by bisection; the elastic reflection
keeps the metric-tangential velocity component and flips the normal one,
which preserves kinetic energy exactly.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import DOP853

from .conics import (
    ConicSpec,
    WallSet,
    branch_arc_accepts,
    implicit_eval,
    normal_at,
    polish_onto_conic,
)
from .errors import ConvergenceError, DomainError, SingularityError
from .potentials import (
    EnergyPair,
    LagrangeParams,
    energy_pair,
    force_plane,
    make_curved_force,
)
from .spaces import (
    Chart,
    ChartPoint,
    Direction,
    Kind,
    SpaceSpec,
    TangentVector,
    central_lift_up,
    lift_jacobian,
    metric_inner,
    minkowski_inner,
    projection_jacobian,
    reparametrize_rate,
    reproject_point,
    tangent_project_components,
)

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-10
CROSSING_TOL = 1e-12          # |implicit| at a located crossing
ARM_THRESHOLD = 1e-9          # |implicit| before a member participates again
GRAZING_RATIO = 1e-8
SUBSAMPLES = 8                # sign probes per accepted step and member
EQUATOR_EXIT = 1e-9           # sphere trajectories may not cross z = 0


class Termination(enum.Enum):
    TIME_LIMIT = "TimeLimit"
    BOUNCE_LIMIT = "BounceLimit"
    COLLISION = "Collision"
    SINGULAR_SET = "SingularSet"
    DOMAIN_EXIT = "DomainExit"


@dataclass(frozen=True)
class State:
    """Position + velocity in the native representation, at proper time t."""

    pos: ChartPoint
    vel: TangentVector
    t: float = 0.0


@dataclass(frozen=True)
class Limits:
    t_max: float
    bounce_max: int
    sample_dt: float
    max_step: float = 0.2


@dataclass(frozen=True)
class ReflectionEvent:
    t: float
    pos: ChartPoint
    v_in: TangentVector
    v_out: TangentVector
    wall_index: int
    normal: TangentVector
    grazing: bool = False
    ambiguous: bool = False
    e_before: Optional[EnergyPair] = None
    e_after: Optional[EnergyPair] = None


@dataclass
class TrajectoryRecord:
    samples: list = field(default_factory=list)   # [(State, EnergyPair)]
    events: list = field(default_factory=list)    # [ReflectionEvent]
    termination: Termination = Termination.TIME_LIMIT
    space: Optional[SpaceSpec] = None
    params: Optional[LagrangeParams] = None
    wall: Optional[WallSet] = None

    @property
    def bounce_count(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class Crossing:
    t: float
    state: State
    wall_index: int


# -- native-state plumbing --------------------------------------------------

def state_from_chart(space: SpaceSpec, p, v, t: float = 0.0) -> State:
    """Native state from gnomonic chart position and chart-time velocity.

    For curved spaces this lifts the point and rescales the pushforward
    by the time-change factor: q' = rate * Dlift(v).
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if space.kind is Kind.PLANE_AFFINE:
        pos = ChartPoint(Chart.GNOMONIC, p)
        return State(pos, TangentVector(pos, v), t)
    pos = central_lift_up(ChartPoint(Chart.GNOMONIC, p), space)
    rate = reparametrize_rate(p, space)
    vel = rate * (lift_jacobian(p, space) @ v)
    return State(pos, TangentVector(pos, vel), t)


def state_to_chart(state: State, space: SpaceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Gnomonic chart position and chart-time velocity of a native state."""
    if space.kind is Kind.PLANE_AFFINE:
        return state.pos.require(Chart.GNOMONIC), state.vel.components
    q = state.pos.require(Chart.AMBIENT3)
    p = np.array([-q[0] / q[2], -q[1] / q[2]])
    rate = reparametrize_rate(p, space)
    v = (projection_jacobian(q, space) @ state.vel.components) / rate
    return p, v


def _pack(state: State, space: SpaceSpec) -> np.ndarray:
    return np.concatenate([state.pos.coords, state.vel.components])


def _unpack(y: np.ndarray, t: float, space: SpaceSpec) -> State:
    n = 2 if space.kind is Kind.PLANE_AFFINE else 3
    chart = Chart.GNOMONIC if n == 2 else Chart.AMBIENT3
    pos = ChartPoint(chart, y[:n])
    return State(pos, TangentVector(pos, y[n:]), t)


def _make_rhs(params: LagrangeParams, space: SpaceSpec) -> Callable:
    if space.kind is Kind.PLANE_AFFINE:

        def rhs(t, y):
            return np.concatenate([y[2:], force_plane(y[:2], params, space)])

        return rhs

    force = make_curved_force(params, space)
    spherical = space.kind is Kind.SPHERE_SOUTH

    def rhs(t, y):
        q, v = y[:3], y[3:]
        if spherical:
            acc = force(q) - np.dot(v, v) * q
        else:
            acc = force(q) + minkowski_inner(v, v) * q
        return np.concatenate([v, acc])

    return rhs


def _renormalize(y: np.ndarray, space: SpaceSpec) -> np.ndarray:
    """Project a packed curved state back onto the manifold and its tangent."""
    if space.kind is Kind.PLANE_AFFINE:
        return y
    q = reproject_point(y[:3], space)
    v = tangent_project_components(q, y[3:], space)
    return np.concatenate([q, v])


# -- single step -------------------------------------------------------------

def step(state: State, params: LagrangeParams, space: SpaceSpec, h: float,
         rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> State:
    """Advance the flow by h with error-controlled Runge-Kutta substeps."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    rhs = _make_rhs(params, space)
    solver = DOP853(rhs, state.t, _pack(state, space), state.t + h,
                    rtol=rtol, atol=atol)
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise ConvergenceError(f"integrator step failed: {message}")
        solver.y = _renormalize(solver.y, space)
    return _unpack(_renormalize(solver.y, space), solver.t, space)


# -- reflection ---------------------------------------------------------------

def reflect(state_on_wall: State, wall_member: ConicSpec, space: SpaceSpec) -> State:
    """Elastic reflection: flip the metric-normal velocity component.

    Decomposing v = k1*s + k2*n in the space metric at the wall point,
    the outgoing velocity is k1*s - k2*n; kinetic energy is preserved to
    rounding.  Grazing incidence (|k2| under 1e-8 of the speed) is still
    reflected but triggers a warning.
    """
    p = state_on_wall.pos.coords
    if abs(implicit_eval(wall_member, p)) > 1e-10:
        raise DomainError("reflect expects a state on the wall (|implicit| < 1e-10)")
    n = normal_at(wall_member, p)
    v = state_on_wall.vel.components
    k2 = metric_inner(v, n.components, state_on_wall.pos, space)
    speed = math.sqrt(max(metric_inner(v, v, state_on_wall.pos, space), 0.0))
    grazing = speed > 0.0 and abs(k2) < GRAZING_RATIO * speed
    if grazing:
        warnings.warn("grazing incidence: reflection applied anyway",
                      RuntimeWarning, stacklevel=2)
    w = v - 2.0 * k2 * n.components
    return replace(state_on_wall, vel=TangentVector(state_on_wall.pos, w))


def _normal_speed(state: State, member: ConicSpec, space: SpaceSpec) -> float:
    n = normal_at(member, state.pos.coords)
    return abs(metric_inner(state.vel.components, n.components, state.pos, space))


# -- crossing location --------------------------------------------------------

def _bisect_crossing(f_of_t, t_lo, t_hi, f_lo, f_hi, max_iter: int = 200) -> float:
    """Bisection on a bracketing sign change until |f| < CROSSING_TOL."""
    for _ in range(max_iter):
        t_mid = 0.5 * (t_lo + t_hi)
        f_mid = f_of_t(t_mid)
        if abs(f_mid) < CROSSING_TOL or (t_hi - t_lo) < 1e-15 * max(1.0, abs(t_hi)):
            return t_mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            t_lo, f_lo = t_mid, f_mid
        else:
            t_hi, f_hi = t_mid, f_mid
    raise ConvergenceError(
        "crossing bisection did not converge (degenerate tangency?)"
    )


def _hermite_segment(s0: State, s1: State, space: SpaceSpec):
    """Cubic Hermite interpolant of a short trajectory segment."""
    t0, t1 = s0.t, s1.t
    h = t1 - t0
    y0, y1 = _pack(s0, space), _pack(s1, space)
    n = len(y0) // 2
    p0, p1 = y0[:n], y1[:n]
    v0, v1 = y0[n:], y1[n:]

    def sol(t):
        u = (t - t0) / h
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        pos = h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1
        dpos = (
            (6 * u**2 - 6 * u) * p0 / h
            + (3 * u**2 - 4 * u + 1) * v0
            + (-6 * u**2 + 6 * u) * p1 / h
            + (3 * u**2 - 2 * u) * v1
        )
        return np.concatenate([pos, dpos])

    return sol


def locate_crossing(
    seg: tuple[State, State],
    wall: WallSet,
    params: Optional[LagrangeParams] = None,
    space: Optional[SpaceSpec] = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> Optional[Crossing]:
    """First valid wall crossing on a trajectory segment, or None.

    When params are supplied the segment is re-integrated for an
    interpolant of integrator quality; otherwise a cubic Hermite through
    the segment endpoints is used (exact for free motion).  The crossing
    time is refined by bisection until the implicit value is below 1e-12
    and the returned state lies on the wall.
    """
    s0, s1 = seg
    space = space or wall.space
    if params is not None:
        rhs = _make_rhs(params, space)
        solver = DOP853(rhs, s0.t, _pack(s0, space), s1.t, rtol=rtol, atol=atol)
        segments = []
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                raise ConvergenceError(f"integration failed: {msg}")
            segments.append(solver.dense_output())

        def sol(t):
            for d in segments:
                if t <= d.t_max or d is segments[-1]:
                    return d(t)
            return segments[-1](t)

    else:
        sol = _hermite_segment(s0, s1, space)

    tracker = _MemberTracker(wall, sol(s0.t), space)
    hit = tracker.scan(sol, s0.t, s1.t)
    if hit is None:
        return None
    t_star, idx = hit
    state = _crossing_state(sol, t_star, wall.members[idx], space)
    return Crossing(t_star, state, idx)


def _crossing_state(sol, t_star: float, member: ConicSpec, space: SpaceSpec) -> State:
    y = np.array(sol(t_star), dtype=float)
    y = _renormalize(y, space)
    n = 2 if space.kind is Kind.PLANE_AFFINE else 3
    p = polish_onto_conic(member, y[:n])
    v = y[n:]
    if space.kind is not Kind.PLANE_AFFINE:
        v = tangent_project_components(p, v, space)
    chart = Chart.GNOMONIC if n == 2 else Chart.AMBIENT3
    pos = ChartPoint(chart, p)
    return State(pos, TangentVector(pos, v), t_star)


class _MemberTracker:
    """Per-member sign bookkeeping with post-reflection re-arming.

    A member participates in crossing detection only once its implicit
    value has moved at least ARM_THRESHOLD away from zero, which keeps a
    freshly reflected trajectory from immediately re-triggering on the
    wall it just left.
    """

    def __init__(self, wall: WallSet, y0: np.ndarray, space: SpaceSpec,
                 skip_member: Optional[int] = None):
        self.wall = wall
        self.space = space
        n = 2 if space.kind is Kind.PLANE_AFFINE else 3
        self.n = n
        self.values = [implicit_eval(m, y0[:n]) for m in wall.members]
        self.armed = [
            abs(v) > ARM_THRESHOLD and i != skip_member
            for i, v in enumerate(self.values)
        ]
        self.signs = [v > 0.0 for v in self.values]

    def scan(self, sol, t_from: float, t_to: float):
        """Earliest accepted crossing in (t_from, t_to], else None.

        Rejected crossings (wrong branch or arc) still flip the tracked
        sign.  Near-simultaneous hits on two members (within 1e-10 in
        time) are merged by the caller.
        """
        ts = np.linspace(t_from, t_to, SUBSAMPLES + 1)[1:]
        nodes = [np.array(sol(t), dtype=float)[: self.n] for t in ts]
        candidates = []
        for i, member in enumerate(self.wall.members):
            t_prev = t_from
            v_prev = self.values[i]
            armed = self.armed[i]
            sign = self.signs[i]
            for t_node, p_node in zip(ts, nodes):
                v_node = implicit_eval(member, p_node)
                if not armed:
                    if abs(v_node) > ARM_THRESHOLD:
                        armed, sign = True, v_node > 0.0
                elif (v_node > 0.0) != sign:
                    t_star = _bisect_crossing(
                        lambda t, m=member: implicit_eval(
                            m, np.array(sol(t), dtype=float)[: self.n]
                        ),
                        t_prev, t_node, v_prev, v_node,
                    )
                    p_star = np.array(sol(t_star), dtype=float)[: self.n]
                    if self.space.kind is not Kind.PLANE_AFFINE:
                        p_star = reproject_point(p_star, self.space)
                    if branch_arc_accepts(member, p_star):
                        candidates.append((t_star, i))
                        break
                    sign = v_node > 0.0
                t_prev, v_prev = t_node, v_node
            self.values[i] = implicit_eval(member, nodes[-1])
            self.armed[i] = armed or abs(self.values[i]) > ARM_THRESHOLD
            self.signs[i] = self.values[i] > 0.0
        if not candidates:
            return None
        return min(candidates, key=lambda c: c[0])


# -- the main loop -------------------------------------------------------------

def simulate(
    init: State,
    params: LagrangeParams,
    space: SpaceSpec,
    wall: WallSet,
    limits: Limits,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> TrajectoryRecord:
    """Run a billiard trajectory until a limit or terminal condition.

    Interleaves adaptive flow steps, crossing location and reflection;
    records the first-integral pair at every sample and just before and
    after each reflection.  Terminal conditions are encoded in the
    record, never raised past it.
    """
    record = TrajectoryRecord(space=space, params=params, wall=wall)
    rhs = _make_rhs(params, space)
    t_end = init.t + limits.t_max

    y = _renormalize(_pack(init, space), space)
    t = init.t
    _emit_sample(record, _unpack(y, t, space), params, space)
    next_sample = t + limits.sample_dt
    skip_member = _member_on(wall, y, space)

    while True:
        solver = DOP853(rhs, t, y, t_end, rtol=rtol, atol=atol,
                        max_step=limits.max_step)
        tracker = _MemberTracker(wall, y, space, skip_member=skip_member)
        skip_member = None
        reflected = False
        while solver.status == "running":
            try:
                message = solver.step()
            except SingularityError as exc:
                record.termination = (
                    Termination.SINGULAR_SET
                    if exc.which == "equator"
                    else Termination.COLLISION
                )
                return record
            if solver.status == "failed":
                record.termination = Termination.SINGULAR_SET
                warnings.warn(f"integrator failure treated as singular: {message}",
                              RuntimeWarning, stacklevel=2)
                return record
            solver.y = _renormalize(solver.y, space)
            dense = solver.dense_output()
            hit = tracker.scan(dense, dense.t_min, solver.t)

            t_stop = hit[0] if hit is not None else solver.t
            next_sample = _emit_grid_samples(
                record, dense, next_sample, t_stop, limits.sample_dt,
                params, space,
            )
            if record.termination is Termination.SINGULAR_SET:
                return record

            if hit is not None:
                t_star, idx = hit
                idx, state_in, ambiguous = _resolve_member(
                    dense, t_star, idx, wall, space
                )
                outcome = _do_reflection(
                    record, state_in, idx, ambiguous, wall, params, space
                )
                if outcome is None:
                    record.termination = Termination.SINGULAR_SET
                    return record
                t, y = outcome
                skip_member = idx
                reflected = True
                if record.bounce_count >= limits.bounce_max:
                    if (not record.samples
                            or t > record.samples[-1][0].t + 1e-15):
                        _emit_sample(record, _unpack(y, t, space), params, space)
                    record.termination = Termination.BOUNCE_LIMIT
                    return record
                break

            if space.kind is Kind.SPHERE_SOUTH and solver.y[2] > -EQUATOR_EXIT:
                record.termination = (
                    Termination.SINGULAR_SET if params.f != 0.0
                    else Termination.DOMAIN_EXIT
                )
                return record

        if reflected:
            continue
        final = _unpack(_renormalize(solver.y, space), solver.t, space)
        if record.samples and final.t > record.samples[-1][0].t + 1e-15:
            _emit_sample(record, final, params, space)
        record.termination = Termination.TIME_LIMIT
        return record


def _member_on(wall: WallSet, y: np.ndarray, space: SpaceSpec) -> Optional[int]:
    n = 2 if space.kind is Kind.PLANE_AFFINE else 3
    for i, m in enumerate(wall.members):
        if abs(implicit_eval(m, y[:n])) < ARM_THRESHOLD:
            return i
    return None


def _emit_sample(record, state: State, params, space) -> bool:
    try:
        pair = energy_pair(state.pos, state.vel, params, space)
    except SingularityError:
        record.termination = Termination.SINGULAR_SET
        return False
    record.samples.append((state, pair))
    return True


def _emit_grid_samples(record, dense, next_sample, t_stop, sample_dt,
                       params, space) -> float:
    while next_sample <= t_stop + 1e-15:
        if next_sample >= dense.t_min - 1e-15:
            y = _renormalize(np.array(dense(next_sample)), space)
            if not _emit_sample(record, _unpack(y, next_sample, space),
                                params, space):
                return next_sample
        next_sample += sample_dt
    return next_sample


def _resolve_member(dense, t_star, idx, wall, space):
    """Apply the near-simultaneous-hit policy: when a second member is on
    the wall within 1e-10, reflect off the one hit more squarely."""
    state = _crossing_state(dense, t_star, wall.members[idx], space)
    close = [
        j
        for j, m in enumerate(wall.members)
        if j != idx
        and abs(implicit_eval(m, state.pos.coords)) < 1e-10
        and branch_arc_accepts(m, state.pos.coords)
    ]
    if not close:
        return idx, state, False
    best = max(close + [idx],
               key=lambda j: _normal_speed(state, wall.members[j], space))
    if best != idx:
        state = _crossing_state(dense, t_star, wall.members[best], space)
    return best, state, True


def _do_reflection(record, state_in, idx, ambiguous, wall, params, space):
    try:
        pair_before = energy_pair(state_in.pos, state_in.vel, params, space)
    except SingularityError:
        return None
    member = wall.members[idx]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        state_out = reflect(state_in, member, space)
    n = normal_at(member, state_in.pos.coords)
    k2 = metric_inner(state_in.vel.components, n.components, state_in.pos, space)
    speed = math.sqrt(
        max(metric_inner(state_in.vel.components, state_in.vel.components,
                         state_in.pos, space), 0.0)
    )
    grazing = speed > 0.0 and abs(k2) < GRAZING_RATIO * speed
    try:
        pair_after = energy_pair(state_out.pos, state_out.vel, params, space)
    except SingularityError:
        return None
    record.events.append(
        ReflectionEvent(
            t=state_in.t,
            pos=state_in.pos,
            v_in=state_in.vel,
            v_out=state_out.vel,
            wall_index=idx,
            normal=n,
            grazing=grazing,
            ambiguous=ambiguous,
            e_before=pair_before,
            e_after=pair_after,
        )
    )
    return state_in.t, _pack(state_out, space)
