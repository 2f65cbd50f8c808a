"""Confocal conic reflection walls in all three geometries.

A conic is stored through the parameters (ta2, tb2) of the cone

    x^2/ta2 + y^2/tb2 - z^2 = 0

that carves it out of the plane ``z = -1`` and of the curved manifold
simultaneously.  For ellipses ta2 = tan(alpha)^2 > 0 (sinh-analogue in
the hyperbolic pairing); hyperbolas have ta2 < 0.  Slicing the cone:

    plane:        x^2/ta2 + y^2/tb2 = 1
    sphere:       x^2/sa2 + y^2/sb2 = 1,  s*2 = t*2/(1 + t*2)
    hyperboloid:  x^2/ha2 + y^2/hb2 = 1,  h*2 = t*2/(1 - t*2)

so projecting a wall between partner geometries is a relabeling of the
space tag.  Confocality to the Kepler centers (0, +-a) reads
tb2 - ta2*(1 + s a^2) = a^2 in the compatible affine norm.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BilliardError, DomainError
from .spaces import (
    Chart,
    ChartPoint,
    Kind,
    SpaceSpec,
    TangentVector,
    affine_inner,
    central_lift_up,
    central_project_down,
    metric_inner,
    minkowski_inner,
    reproject_point,
    tangent_project_components,
)


class Family(enum.Enum):
    ELLIPSE = "ellipse"
    HYPERBOLA = "hyperbola"


class Branch(enum.Enum):
    BOTH = "both"
    POSITIVE = "positive"  # the y > 0 branch for the normalized foci layout
    NEGATIVE = "negative"


@dataclass(frozen=True)
class ConicSpec:
    """One member of a confocal family, with branch/arc selection.

    ``arc`` optionally restricts the active wall to chart polar angles
    (radians, measured about the conic center) inside [arc[0], arc[1]].
    ``center`` shifts the chart quadric; nonzero offsets build the
    deliberately non-confocal control walls and are only supported in
    the plane.
    """

    space: SpaceSpec
    family: Family
    ta2: float
    tb2: float
    branch: Branch = Branch.BOTH
    arc: Optional[tuple[float, float]] = None
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.tb2 <= 0.0:
            raise DomainError("tb2 must be positive")
        if self.family is Family.ELLIPSE and self.ta2 <= 0.0:
            raise DomainError("ellipse needs ta2 > 0")
        if self.family is Family.HYPERBOLA and self.ta2 >= 0.0:
            raise DomainError("hyperbola needs ta2 < 0")
        if self.space.kind is Kind.HYPERBOLOID_LOWER or (
            self.space.kind is Kind.PLANE_AFFINE and self.space.pair_sign == -1
        ):
            if self.ta2 >= 1.0 or self.tb2 >= 1.0:
                raise DomainError(
                    "hyperbolic-pairing conic parameters must stay below 1 "
                    "(Klein chart semi-axes inside the unit disc)"
                )
        if self.center != (0.0, 0.0) and self.space.kind is not Kind.PLANE_AFFINE:
            raise DomainError("offset (non-confocal) walls only ship in the plane")

    @classmethod
    def from_b(
        cls,
        space: SpaceSpec,
        b: float,
        branch: Branch = Branch.BOTH,
        arc: Optional[tuple[float, float]] = None,
    ) -> "ConicSpec":
        """Member of the confocal family with semi-axis parameter B.

        B > a gives the ellipse of the family with chart y-semi-axis B;
        0 < B < a gives a hyperbola.  B = a is the degenerate focal
        segment and is excluded.
        """
        a = space.a
        if b <= 0.0:
            raise DomainError("B must be positive")
        if abs(b - abs(a)) < 1e-12:
            raise DomainError("B = |a| is the degenerate focal conic")
        denom = space.norm_denom
        ta2 = (b * b - a * a) / denom
        family = Family.ELLIPSE if b > abs(a) else Family.HYPERBOLA
        return cls(space, family, ta2, b * b, branch=branch, arc=arc)

    @classmethod
    def offset_circle(cls, space: SpaceSpec, center: tuple[float, float],
                      radius: float) -> "ConicSpec":
        """Control wall: a chart circle centered off the foci axis."""
        return cls(
            space, Family.ELLIPSE, radius * radius, radius * radius,
            center=(float(center[0]), float(center[1])),
        )

    # -- derived geometry -------------------------------------------------

    def curved_axes2(self) -> tuple[float, float]:
        """Squared semi-axis parameters of the ambient conic equation."""
        s = self.space.sign
        if s == 0:
            raise DomainError("curved_axes2 applies to curved-space conics")
        da, db = 1.0 + s * self.ta2, 1.0 + s * self.tb2
        if da <= 0.0 or db <= 0.0:
            raise DomainError("cone does not intersect the manifold")
        return self.ta2 / da, self.tb2 / db

    def focus_distance(self) -> float:
        """Chart focus half-distance c from the compatible-norm relation
        c^2 = tb2 - ta2*(1 + s a^2); equals a for confocal members."""
        c2 = self.tb2 - self.ta2 * self.space.norm_denom
        if c2 < 0.0:
            raise DomainError("foci lie on the x-axis; unsupported orientation")
        return math.sqrt(c2)

    def foci_chart(self) -> np.ndarray:
        c = self.focus_distance()
        return np.array([[0.0, c], [0.0, -c]])

    def is_confocal(self, tol: float = 1e-10) -> bool:
        if self.center != (0.0, 0.0):
            return False
        return abs(self.focus_distance() - abs(self.space.a)) <= tol


def implicit_eval(spec: ConicSpec, p) -> float:
    """Signed implicit value; the zero set is the conic, negative inside
    an ellipse, and hyperbolas keep the same ellipse-like quadratic form."""
    p = np.asarray(p, dtype=float)
    if spec.space.kind is Kind.PLANE_AFFINE:
        x = p[0] - spec.center[0]
        y = p[1] - spec.center[1]
        return float(x * x / spec.ta2 + y * y / spec.tb2 - 1.0)
    a2, b2 = spec.curved_axes2()
    x, y = p[0], p[1]
    return float(x * x / a2 + y * y / b2 - 1.0)


def implicit_gradient(spec: ConicSpec, p) -> np.ndarray:
    """Coordinate gradient of implicit_eval in the natural chart."""
    p = np.asarray(p, dtype=float)
    if spec.space.kind is Kind.PLANE_AFFINE:
        return np.array(
            [
                2.0 * (p[0] - spec.center[0]) / spec.ta2,
                2.0 * (p[1] - spec.center[1]) / spec.tb2,
            ]
        )
    a2, b2 = spec.curved_axes2()
    return np.array([2.0 * p[0] / a2, 2.0 * p[1] / b2, 0.0])


def normal_at(spec: ConicSpec, p) -> TangentVector:
    """Unit normal to the conic at an on-curve point, in the space metric.

    Plane: the affine-metric sharp of the differential.  Curved spaces:
    the ambient (pseudo-)gradient followed by the tangent projection,
    normalized in the induced metric.
    """
    p = np.asarray(p, dtype=float)
    if abs(implicit_eval(spec, p)) > 1e-10:
        raise DomainError("normal_at expects an on-curve point (|implicit| < 1e-10)")
    g = implicit_gradient(spec, p)
    space = spec.space
    if space.kind is Kind.PLANE_AFFINE:
        n = np.array([g[0], g[1] * space.norm_denom])
        base = ChartPoint(Chart.GNOMONIC, p)
    else:
        # Minkowski sharp leaves g alone because its z-component vanishes.
        n = tangent_project_components(p, g, space)
        base = ChartPoint(Chart.AMBIENT3, p)
    nn = metric_inner(n, n, base, space)
    if nn <= 1e-24:
        raise DomainError("degenerate conic gradient")
    return TangentVector(base, n / math.sqrt(nn))


def tangent_at(spec: ConicSpec, p) -> TangentVector:
    """Unit tangent of the conic at an on-curve point, in the space metric."""
    p = np.asarray(p, dtype=float)
    g = implicit_gradient(spec, p)
    space = spec.space
    if space.kind is Kind.PLANE_AFFINE:
        t = np.array([-g[1], g[0]])
        base = ChartPoint(Chart.GNOMONIC, p)
    elif space.kind is Kind.SPHERE_SOUTH:
        t = np.cross(p, g)
        base = ChartPoint(Chart.AMBIENT3, p)
    else:
        # Euclidean normal of the quadric x^2 + y^2 - z^2 = -1 is (x, y, -z).
        t = np.cross(g, np.array([p[0], p[1], -p[2]]))
        base = ChartPoint(Chart.AMBIENT3, p)
    tt = metric_inner(t, t, base, space)
    return TangentVector(base, t / math.sqrt(tt))


def project_conic(spec: ConicSpec, direction) -> ConicSpec:
    """Corresponding conic in the partner geometry through the shared cone.

    Plane (tan alpha, tan beta) semi-axes pair with curved
    (sin alpha, sin beta) ones; foci map to foci.  Parameter-wise this is
    a relabeling of the space tag.
    """
    from .spaces import Direction

    if spec.center != (0.0, 0.0):
        raise DomainError("non-confocal control walls have no projective partner")
    if direction is Direction.UP and spec.space.kind is not Kind.PLANE_AFFINE:
        raise DomainError("Up projects a planar conic onto the curved partner")
    if direction is Direction.DOWN and spec.space.kind is Kind.PLANE_AFFINE:
        raise DomainError("Down projects a curved conic onto the plane")
    return ConicSpec(
        spec.space.partner(), spec.family, spec.ta2, spec.tb2,
        branch=spec.branch, arc=spec.arc,
    )


def sample_points(spec: ConicSpec, n: int, span: float = 2.5,
                  margin: float = 1e-3) -> np.ndarray:
    """n points on the conic in its natural chart.

    Ellipses are sampled uniformly in the cone angle; hyperbola branches
    in the hyperbolic-angle parameter over [-span, span] (restricted to
    the active branch, and to the Klein disc for the hyperbolic pairing).
    """
    pts2 = _sample_chart(spec, n, span)
    hyperbolic_pairing = (
        spec.space.kind is Kind.HYPERBOLOID_LOWER
        or (spec.space.kind is Kind.PLANE_AFFINE and spec.space.pair_sign == -1)
    )
    if hyperbolic_pairing:
        keep = np.sum(pts2 * pts2, axis=1) < 1.0 - margin
        pts2 = pts2[keep]
        if len(pts2) == 0:
            raise DomainError("conic does not meet the Klein disc")
    if spec.space.kind is Kind.PLANE_AFFINE:
        return pts2
    lifted = [
        central_lift_up(ChartPoint(Chart.GNOMONIC, p), spec.space).coords
        for p in pts2
    ]
    return np.array(lifted)


def _sample_chart(spec: ConicSpec, n: int, span: float) -> np.ndarray:
    cx, cy = spec.center
    if spec.family is Family.ELLIPSE:
        theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return np.column_stack(
            [
                cx + math.sqrt(spec.ta2) * np.cos(theta),
                cy + math.sqrt(spec.tb2) * np.sin(theta),
            ]
        )
    u = np.linspace(-span, span, n)
    x = math.sqrt(-spec.ta2) * np.sinh(u)
    y = math.sqrt(spec.tb2) * np.cosh(u)
    if spec.branch is Branch.POSITIVE:
        return np.column_stack([cx + x, cy + y])
    if spec.branch is Branch.NEGATIVE:
        return np.column_stack([cx + x, cy - y])
    half = np.column_stack([cx + x, cy + y])
    return np.vstack([half, np.column_stack([cx + x, cy - y])])


def branch_arc_accepts(spec: ConicSpec, p) -> bool:
    """Whether a point on the conic lies on the active branch and arc."""
    p = np.asarray(p, dtype=float)
    if spec.space.kind is Kind.PLANE_AFFINE:
        chart = p
    else:
        chart = central_project_down(
            ChartPoint(Chart.AMBIENT3, p), spec.space
        ).coords
    if spec.family is Family.HYPERBOLA and spec.branch is not Branch.BOTH:
        want_positive = spec.branch is Branch.POSITIVE
        if (chart[1] - spec.center[1] > 0.0) != want_positive:
            return False
    if spec.arc is not None:
        phi = math.atan2(chart[1] - spec.center[1], chart[0] - spec.center[0])
        lo, hi = spec.arc
        # compare on the circle
        width = (hi - lo) % (2.0 * math.pi)
        if width == 0.0:
            width = 2.0 * math.pi
        if (phi - lo) % (2.0 * math.pi) > width:
            return False
    return True


def polish_onto_conic(spec: ConicSpec, p, max_iter: int = 5) -> np.ndarray:
    """Newton-correct a near-wall point onto the conic (and manifold)."""
    p = np.array(p, dtype=float)
    for _ in range(max_iter):
        f = implicit_eval(spec, p)
        if abs(f) < 1e-14:
            break
        g = implicit_gradient(spec, p)
        if spec.space.kind is not Kind.PLANE_AFFINE:
            g = tangent_project_components(p, g, spec.space)
        gg = float(np.dot(g, g))
        if gg == 0.0:
            raise DomainError("degenerate gradient while polishing crossing")
        p = p - f / gg * g
        if spec.space.kind is not Kind.PLANE_AFFINE:
            p = reproject_point(p, spec.space)
    return p


@dataclass(frozen=True)
class WallSet:
    """A combination of confocal conic sections acting as one wall."""

    members: tuple[ConicSpec, ...]

    def __post_init__(self):
        if not self.members:
            raise BilliardError("a wall needs at least one member conic")
        space = self.members[0].space
        for m in self.members[1:]:
            if m.space != space:
                raise BilliardError(
                    "all wall members must share the same space and foci"
                )

    @property
    def space(self) -> SpaceSpec:
        return self.members[0].space

    @classmethod
    def single(cls, spec: ConicSpec) -> "WallSet":
        return cls((spec,))


def crossing_function(wall: WallSet, p) -> tuple[float, int]:
    """Implicit value of the member conic nearest to zero, plus its index.

    Members whose active branch/arc excludes the query point do not
    compete (they fall back only if every member excludes it).  Sign
    changes of this scalar along a trajectory flag candidate reflections.
    """
    values = [implicit_eval(m, p) for m in wall.members]
    accepted = [i for i, m in enumerate(wall.members) if branch_arc_accepts(m, p)]
    pool = accepted if accepted else range(len(values))
    best = min(pool, key=lambda i: abs(values[i]))
    return values[best], best
