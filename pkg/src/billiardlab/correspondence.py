"""Whole-trajectory projection between geometries and geometric comparison.

Billiard trajectories of corresponding systems trace the same chart
curves up to time reparametrization, so records are compared segmentwise
(between reflections) after arc-length normalization; reflections are
the natural synchronization points.  The partner time parameter is
recovered by integrating the time-change factor along the samples.
"""

from __future__ import annotations

import math
import warnings
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .dynamics import (
    ReflectionEvent,
    State,
    TrajectoryRecord,
    state_from_chart,
    state_to_chart,
)
from .errors import DomainError
from .potentials import LagrangeParams, energy_pair, params_down, params_up
from .spaces import (
    Chart,
    ChartPoint,
    Direction,
    Kind,
    SpaceSpec,
    TangentVector,
    central_lift_up,
    central_project_down,
    lift_jacobian,
    metric_inner,
    projection_jacobian,
    reparametrize_rate,
)
from .conics import WallSet, project_conic


def _chart_of_state(state: State, space: SpaceSpec) -> tuple[np.ndarray, np.ndarray]:
    return state_to_chart(state, space)


def project_trajectory(rec: TrajectoryRecord, direction: Direction,
                       space: SpaceSpec) -> TrajectoryRecord:
    """Map a whole record to the partner geometry by central projection.

    Every sample and event is pushed through the point map and the
    velocity differential (with the time-change velocity scaling), and
    the partner time parameter is rebuilt by trapezoidal integration of
    the rate along the samples.  Energy pairs are recomputed in the
    target system, which swaps their roles up to numerical error.
    """
    if rec.space != space:
        raise DomainError("record was not produced in the given space")
    if direction is Direction.DOWN and space.kind is Kind.PLANE_AFFINE:
        raise DomainError("Down projects a curved record")
    if direction is Direction.UP and space.kind is not Kind.PLANE_AFFINE:
        raise DomainError("Up projects a planar record")

    target = space.partner()
    params = rec.params
    new_params = (params_down(params, space) if direction is Direction.DOWN
                  else params_up(params, space)) if params else None
    new_wall = (WallSet(tuple(project_conic(m, direction) for m in rec.wall.members))
                if rec.wall else None)

    # merge samples and events into one time-ordered stream for the
    # cumulative time integral
    stream: list[tuple[float, str, object]] = [
        (s.t, "sample", (s, pair)) for (s, pair) in rec.samples
    ]
    stream += [(e.t, "event", e) for e in rec.events]
    stream.sort(key=lambda item: (item[0], 0 if item[1] == "sample" else 1))

    out = TrajectoryRecord(space=target, params=new_params, wall=new_wall,
                           termination=rec.termination)
    t_new = rec.samples[0][0].t if rec.samples else 0.0
    prev_t = None
    prev_integrand = None
    for t_old, kind, payload in stream:
        state = payload[0] if kind == "sample" else None
        pos = state.pos if state is not None else payload.pos
        p_chart, _ = _chart_or_map(pos, space)
        rate = reparametrize_rate(p_chart, space)
        # dt/dtau = rate going Down; dtau/dt = 1/rate going Up
        integrand = rate if direction is Direction.DOWN else 1.0 / rate
        if prev_t is not None:
            t_new += 0.5 * (integrand + prev_integrand) * (t_old - prev_t)
        prev_t, prev_integrand = t_old, integrand
        if kind == "sample":
            new_state = _map_state(state, direction, space, t_new)
            pair = energy_pair(new_state.pos, new_state.vel, new_params, target)
            out.samples.append((new_state, pair))
        else:
            out.events.append(_map_event(payload, direction, space, target,
                                         new_params, t_new))
    return out


def _chart_or_map(pos: ChartPoint, space: SpaceSpec) -> tuple[np.ndarray, ChartPoint]:
    if space.kind is Kind.PLANE_AFFINE:
        return pos.require(Chart.GNOMONIC), pos
    down = central_project_down(pos, space)
    return down.coords, down


def _map_state(state: State, direction: Direction, space: SpaceSpec,
               t_new: float) -> State:
    if direction is Direction.DOWN:
        p, v = state_to_chart(state, space)
        pos = ChartPoint(Chart.GNOMONIC, p)
        return State(pos, TangentVector(pos, v), t_new)
    p = state.pos.require(Chart.GNOMONIC)
    v = state.vel.components
    return state_from_chart(space.partner(), p, v, t_new)


def _map_vector(vec: TangentVector, direction: Direction, space: SpaceSpec,
                new_base: ChartPoint) -> TangentVector:
    if direction is Direction.DOWN:
        q = vec.base.require(Chart.AMBIENT3)
        p = new_base.require(Chart.GNOMONIC)
        rate = reparametrize_rate(p, space)
        comps = (projection_jacobian(q, space) @ vec.components) / rate
        return TangentVector(new_base, comps)
    p = vec.base.require(Chart.GNOMONIC)
    rate = reparametrize_rate(p, space)
    target = space.partner()
    comps = rate * (lift_jacobian(p, target) @ vec.components)
    return TangentVector(new_base, comps)


def _map_event(e: ReflectionEvent, direction: Direction, space: SpaceSpec,
               target: SpaceSpec, new_params: Optional[LagrangeParams],
               t_new: float) -> ReflectionEvent:
    if direction is Direction.DOWN:
        new_pos = central_project_down(e.pos, space)
    else:
        new_pos = central_lift_up(e.pos, target)
    v_in = _map_vector(e.v_in, direction, space, new_pos)
    v_out = _map_vector(e.v_out, direction, space, new_pos)
    n = _map_vector(e.normal, direction, space, new_pos)
    nn = metric_inner(n.components, n.components, new_pos, target)
    n = TangentVector(new_pos, n.components / math.sqrt(nn))
    pair_b = pair_a = None
    if new_params is not None:
        pair_b = energy_pair(new_pos, v_in, new_params, target)
        pair_a = energy_pair(new_pos, v_out, new_params, target)
    return ReflectionEvent(
        t=t_new, pos=new_pos, v_in=v_in, v_out=v_out,
        wall_index=e.wall_index, normal=n, grazing=e.grazing,
        ambiguous=e.ambiguous, e_before=pair_b, e_after=pair_a,
    )


# -- geometric comparison ------------------------------------------------------

def _event_chart_velocity(e: ReflectionEvent, space: SpaceSpec,
                          outgoing: bool) -> np.ndarray:
    vec = e.v_out if outgoing else e.v_in
    if space.kind is Kind.PLANE_AFFINE:
        return vec.components
    q = e.pos.require(Chart.AMBIENT3)
    p = np.array([-q[0] / q[2], -q[1] / q[2]])
    rate = reparametrize_rate(p, space)
    return (projection_jacobian(q, space) @ vec.components) / rate


def _segment_knots(rec: TrajectoryRecord) -> list[list[tuple]]:
    """(t, chart position, chart velocity) knots per bounce segment,
    anchored by the exact event states."""
    knots = [
        (s.t, *state_to_chart(s, rec.space)) for (s, _) in rec.samples
    ]
    times = np.array([k[0] for k in knots])
    segments = []
    lo = 0
    start = None
    for e in rec.events:
        p_e = _chart_or_map(e.pos, rec.space)[0]
        # strictly earlier samples only: a sample can share the event time
        # but then carries the post-reflection velocity
        hi = int(np.searchsorted(times, e.t, side="left"))
        rows = ([start] if start is not None else []) + knots[lo:hi]
        rows.append((e.t, p_e, _event_chart_velocity(e, rec.space, outgoing=False)))
        segments.append(rows)
        start = (e.t, p_e, _event_chart_velocity(e, rec.space, outgoing=True))
        lo = hi
    rows = ([start] if start is not None else []) + knots[lo:]
    if len(rows) >= 2:
        segments.append(rows)
    return [seg for seg in segments if len(seg) >= 2]


def _dense_segment(knots: list[tuple], refine: int = 16) -> np.ndarray:
    """Dense polyline through segment knots via Hermite interpolation in
    time.  Time interpolation stays accurate through spatial turning
    points, where the curve itself is cusp-like and chord-parametrized
    fits break down."""
    ts, ps, vs = [], [], []
    for t, p, v in knots:
        if ts and t <= ts[-1] + 1e-13:
            continue
        ts.append(t)
        ps.append(np.asarray(p, dtype=float))
        vs.append(np.asarray(v, dtype=float))
    ts = np.array(ts)
    ps = np.array(ps)
    vs = np.array(vs)
    if len(ts) < 2:
        return ps
    spline = CubicHermiteSpline(ts, ps, vs, axis=0)
    dense_t = []
    for k in range(len(ts) - 1):
        dense_t.append(np.linspace(ts[k], ts[k + 1], refine, endpoint=False))
    dense_t = np.concatenate(dense_t + [ts[-1:]])
    return spline(dense_t)


def _segment_polylines(rec: TrajectoryRecord, refine: int = 16) -> list[np.ndarray]:
    """Dense per-segment chart polylines split at reflection times."""
    out = []
    for knots in _segment_knots(rec):
        poly = _dedupe(_dense_segment(knots, refine))
        if len(poly) >= 2:
            out.append(poly)
    return out


def _dedupe(points: np.ndarray) -> np.ndarray:
    if len(points) < 2:
        return points
    keep = [0]
    for i in range(1, len(points)):
        if np.linalg.norm(points[i] - points[keep[-1]]) > 1e-13:
            keep.append(i)
    return points[keep]


def resample_arclength(points: np.ndarray, n_out: int = 513) -> np.ndarray:
    """Resample a (dense) polyline at uniform normalized arc length.

    Sparse polylines (< 64 vertices) are first thickened with a cubic
    spline so the chord-length parameter is trustworthy; dense ones are
    linearly resampled in place.
    """
    points = _dedupe(np.asarray(points, dtype=float))
    if len(points) < 2:
        raise DomainError("need at least two distinct points to resample")
    if 4 <= len(points) < 64:
        chord = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))]
        )
        spline = CubicSpline(chord / chord[-1], points, axis=0)
        points = spline(np.linspace(0.0, 1.0, 24 * len(points)))
    s = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))]
    )
    s /= s[-1]
    s_grid = np.linspace(0.0, 1.0, n_out)
    return np.column_stack(
        [np.interp(s_grid, s, points[:, k]) for k in range(points.shape[1])]
    )


def compare_point_sets(a: TrajectoryRecord, b: TrajectoryRecord,
                       n_per_segment: int = 513) -> float:
    """Time-parametrization-free distance between two records.

    Each bounce segment is arc-length reparametrized to [0, 1] and the
    two curves are compared pointwise at matched parameters; the result
    is the maximum over all segments.  Mismatched bounce structure is
    reported as inf rather than raised.
    """
    if a.space.kind != b.space.kind or len(a.samples) == 0 or len(b.samples) == 0:
        warnings.warn("records not comparable (chart/sample mismatch)",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    seg_a = _segment_polylines(a)
    seg_b = _segment_polylines(b)
    if len(seg_a) != len(seg_b):
        warnings.warn(
            f"bounce-structure mismatch: {len(seg_a)} vs {len(seg_b)} segments",
            RuntimeWarning, stacklevel=2,
        )
        return math.inf
    worst = 0.0
    for pa, pb in zip(seg_a, seg_b):
        ra = resample_arclength(pa, n_per_segment)
        rb = resample_arclength(pb, n_per_segment)
        worst = max(worst, float(np.max(np.linalg.norm(ra - rb, axis=1))))
    return worst


def point_to_polyline_distance(points: np.ndarray, curve: np.ndarray) -> float:
    """Max over points of the distance to a piecewise-linear curve."""
    points = np.asarray(points, dtype=float)
    curve = np.asarray(curve, dtype=float)
    seg_a = curve[:-1]
    seg_d = curve[1:] - curve[:-1]
    seg_len2 = np.maximum(np.sum(seg_d * seg_d, axis=1), 1e-300)
    worst = 0.0
    for p in points:
        tproj = np.clip(np.einsum("ij,ij->i", p - seg_a, seg_d) / seg_len2, 0.0, 1.0)
        closest = seg_a + tproj[:, None] * seg_d
        d = np.min(np.linalg.norm(closest - p, axis=1))
        worst = max(worst, float(d))
    return worst


# -- functional independence ----------------------------------------------------

def independence_check(state: State, params: LagrangeParams,
                       space: SpaceSpec) -> float:
    """|det| of the velocity submatrix of the two chart energies.

    Rows are the velocity gradients of the planar and curved energies in
    the shared chart:

        [ vx,                      vy / (1 + s a^2)        ]
        [ (1 + s y^2) vx - s x y vy,  -s x y vx + (1 + s x^2) vy ]

    Vanishing only on a measure-zero velocity set, this certifies the
    functional independence of the first-integral pair.
    """
    p, v = state_to_chart(state, space)
    return independence_det(p, v, params.a,
                            space.pair_sign if space.kind is Kind.PLANE_AFFINE
                            else space.sign)


def independence_det(p, v, a: float, sign: int) -> float:
    x, y = np.asarray(p, dtype=float)
    vx, vy = np.asarray(v, dtype=float)
    s = float(sign)
    d = 1.0 + s * a * a
    row1 = (vx, vy / d)
    row2 = (
        (1.0 + s * y * y) * vx - s * x * y * vy,
        -s * x * y * vx + (1.0 + s * x * x) * vy,
    )
    return abs(row1[0] * row2[1] - row1[1] * row2[0])
