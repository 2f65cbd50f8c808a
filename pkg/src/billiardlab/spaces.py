"""Geometries, charts and projections.

Three configuration spaces are supported:

* the affine plane ``V = R^2 x {-1}`` carrying the anisotropic norm
  ``|p|_a = sqrt(x^2 + y^2/(1 + s*a^2))``,
* the open south hemisphere of the unit sphere (``s = +1``),
* the lower sheet of the unit two-sheeted hyperboloid in Minkowski
  3-space (``s = -1``), whose central image is the open Klein disc.

The central (gnomonic) projection from the origin identifies each curved
space with (part of) the plane; the map is ``q -> (-x/z, -y/z)`` with
inverse ``p -> (x, y, -1)/|​(x, y, -1)|`` in the appropriate norm.  The
time reparametrization linking dynamics on the two sides is
``d/dtau = |p|^2 d/dt`` where ``|p|^2`` is ``x^2 + y^2 + 1`` for the
sphere and ``1 - x^2 - y^2`` for the hyperboloid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ChartMismatchError, DomainError

# Hard domain guard: projections genuinely blow up at the sphere equator
# and the Klein disc boundary, so fail loudly this close to them.
BOUNDARY_GUARD = 1e-12


class Kind(enum.Enum):
    PLANE_AFFINE = "plane"
    SPHERE_SOUTH = "sphere"
    HYPERBOLOID_LOWER = "hyperboloid"


class Chart(enum.Enum):
    AMBIENT3 = "ambient3"
    GNOMONIC = "gnomonic"
    STEREOGRAPHIC = "stereographic"


class Direction(enum.Enum):
    UP = "up"      # plane chart -> curved manifold
    DOWN = "down"  # curved manifold -> plane chart


@dataclass(frozen=True)
class SpaceSpec:
    """A geometry together with its center-separation parameter ``a``.

    ``a`` is the half-distance of the Kepler centers in the gnomonic
    chart.  For the plane, ``pair_sign`` selects which curved partner the
    affine norm is compatible with (+1 sphere, -1 hyperboloid); for the
    curved spaces it is fixed by the geometry.
    """

    kind: Kind
    a: float = 0.0
    pair_sign: int = +1

    def __post_init__(self):
        if self.kind is Kind.SPHERE_SOUTH:
            object.__setattr__(self, "pair_sign", +1)
        elif self.kind is Kind.HYPERBOLOID_LOWER:
            object.__setattr__(self, "pair_sign", -1)
        if self.pair_sign not in (+1, -1):
            raise ValueError("pair_sign must be +1 or -1")
        if self.norm_denom <= 0.0:
            raise DomainError(
                f"1 + sign*a^2 = {self.norm_denom} <= 0; centers must lie "
                "inside the Klein disc (|a| < 1) for the hyperbolic pairing"
            )

    @property
    def sign(self) -> int:
        """Curvature sign: +1 sphere, -1 hyperboloid, 0 plane."""
        if self.kind is Kind.SPHERE_SOUTH:
            return +1
        if self.kind is Kind.HYPERBOLOID_LOWER:
            return -1
        return 0

    @property
    def norm_denom(self) -> float:
        """The factor ``1 + sign*a^2`` entering the affine norm."""
        return 1.0 + self.pair_sign * self.a * self.a

    @classmethod
    def plane(cls, a: float = 0.0, pair_sign: int = +1) -> "SpaceSpec":
        return cls(Kind.PLANE_AFFINE, a, pair_sign)

    @classmethod
    def sphere(cls, a: float = 0.0) -> "SpaceSpec":
        return cls(Kind.SPHERE_SOUTH, a, +1)

    @classmethod
    def hyperboloid(cls, a: float = 0.0) -> "SpaceSpec":
        if abs(a) >= 1.0:
            raise DomainError(f"hyperboloid requires |a| < 1, got a={a}")
        return cls(Kind.HYPERBOLOID_LOWER, a, -1)

    def partner(self) -> "SpaceSpec":
        """The projectively corresponding space (plane <-> curved)."""
        if self.kind is Kind.PLANE_AFFINE:
            if self.pair_sign == +1:
                return SpaceSpec.sphere(self.a)
            return SpaceSpec.hyperboloid(self.a)
        return SpaceSpec.plane(self.a, pair_sign=self.sign)


def _freeze(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """A point tagged with the chart its coordinates live in."""

    chart: Chart
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _freeze(self.coords))
        n = 3 if self.chart is Chart.AMBIENT3 else 2
        if self.coords.shape != (n,):
            raise ChartMismatchError(
                f"{self.chart.value} point needs {n} coordinates, "
                f"got shape {self.coords.shape}"
            )

    def require(self, chart: Chart) -> np.ndarray:
        if self.chart is not chart:
            raise ChartMismatchError(
                f"expected a {chart.value} point, got {self.chart.value}"
            )
        return self.coords


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A tangent vector attached to a chart point."""

    base: ChartPoint
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", _freeze(self.components))
        if self.components.shape != self.base.coords.shape:
            raise ChartMismatchError(
                "tangent components must match the base chart dimension"
            )


def minkowski_inner(u, v) -> float:
    """Pairing of the metric dx^2 + dy^2 - dz^2."""
    return float(u[0] * v[0] + u[1] * v[1] - u[2] * v[2])


def affine_inner(u, v, space: SpaceSpec) -> float:
    """Planar inner product <u, v>_a = u1 v1 + u2 v2 / (1 + s a^2)."""
    return float(u[0] * v[0] + u[1] * v[1] / space.norm_denom)


def affine_norm(p, space: SpaceSpec) -> float:
    """Anisotropic planar norm sqrt(x^2 + y^2/(1 + s a^2))."""
    p = np.asarray(p, dtype=float)
    return math.sqrt(max(affine_inner(p, p, space), 0.0))


def manifold_residual(q, space: SpaceSpec) -> float:
    """Signed defect of the quadric constraint (0 on the manifold)."""
    x, y, z = q
    if space.kind is Kind.SPHERE_SOUTH:
        return float(x * x + y * y + z * z - 1.0)
    if space.kind is Kind.HYPERBOLOID_LOWER:
        return float(x * x + y * y - z * z + 1.0)
    raise DomainError("manifold_residual is defined for curved spaces only")


def reproject_point(q, space: SpaceSpec) -> np.ndarray:
    """Radially rescale q back onto the quadric (constraint stabilization)."""
    q = np.asarray(q, dtype=float)
    if space.kind is Kind.SPHERE_SOUTH:
        return q / np.linalg.norm(q)
    if space.kind is Kind.HYPERBOLOID_LOWER:
        s = -minkowski_inner(q, q)
        if s <= 0.0:
            raise DomainError("point left the timelike cone of the hyperboloid")
        return q / math.sqrt(s)
    raise DomainError("reproject_point is defined for curved spaces only")


def tangent_project(q: ChartPoint, v, space: SpaceSpec) -> TangentVector:
    """Remove the manifold-normal component of an ambient vector.

    Euclidean orthogonal projection for the sphere; Minkowski-orthogonal
    projection for the hyperboloid (there the normal direction is q
    itself under the Minkowski pairing).
    """
    qc = q.require(Chart.AMBIENT3)
    v = np.asarray(v, dtype=float)
    if space.kind is Kind.SPHERE_SOUTH:
        w = v - np.dot(v, qc) * qc
    elif space.kind is Kind.HYPERBOLOID_LOWER:
        w = v + minkowski_inner(v, qc) * qc
    else:
        raise DomainError("tangent_project is defined for curved spaces only")
    return TangentVector(q, w)


def tangent_project_components(qc, v, space: SpaceSpec) -> np.ndarray:
    """Array-level version of tangent_project for hot loops."""
    if space.kind is Kind.SPHERE_SOUTH:
        return v - np.dot(v, qc) * qc
    return v + minkowski_inner(v, qc) * qc


def central_lift_up(p: ChartPoint, space: SpaceSpec) -> ChartPoint:
    """Lift a gnomonic point onto the curved manifold, q = p~/|p~|."""
    pc = p.require(Chart.GNOMONIC)
    x, y = pc
    if space.kind is Kind.SPHERE_SOUTH:
        n = math.sqrt(x * x + y * y + 1.0)
        return ChartPoint(Chart.AMBIENT3, (x / n, y / n, -1.0 / n))
    if space.kind is Kind.HYPERBOLOID_LOWER:
        r2 = 1.0 - x * x - y * y
        if r2 <= BOUNDARY_GUARD:
            raise DomainError(
                f"gnomonic point ({x}, {y}) is outside the Klein disc"
            )
        r = math.sqrt(r2)
        return ChartPoint(Chart.AMBIENT3, (x / r, y / r, -1.0 / r))
    raise DomainError("central_lift_up targets a curved space")


def central_project_down(q: ChartPoint, space: SpaceSpec) -> ChartPoint:
    """Gnomonic image (-x/z, -y/z) of a point on the curved manifold."""
    qc = q.require(Chart.AMBIENT3)
    x, y, z = qc
    if space.kind is Kind.SPHERE_SOUTH and z >= -BOUNDARY_GUARD:
        raise DomainError(f"central projection blows up at the equator (z={z})")
    if space.kind is Kind.PLANE_AFFINE:
        raise DomainError("central_project_down expects a curved space")
    return ChartPoint(Chart.GNOMONIC, (-x / z, -y / z))


def lift_jacobian(p, space: SpaceSpec) -> np.ndarray:
    """3x2 differential of central_lift_up at a gnomonic point."""
    x, y = np.asarray(p, dtype=float)
    if space.kind is Kind.SPHERE_SOUTH:
        n3 = (x * x + y * y + 1.0) ** 1.5
        return np.array(
            [
                [(y * y + 1.0) / n3, -x * y / n3],
                [-x * y / n3, (x * x + 1.0) / n3],
                [x / n3, y / n3],
            ]
        )
    if space.kind is Kind.HYPERBOLOID_LOWER:
        r2 = 1.0 - x * x - y * y
        if r2 <= BOUNDARY_GUARD:
            raise DomainError("differential undefined at the Klein disc boundary")
        r3 = r2 ** 1.5
        return np.array(
            [
                [(1.0 - y * y) / r3, x * y / r3],
                [x * y / r3, (1.0 - x * x) / r3],
                [-x / r3, -y / r3],
            ]
        )
    raise DomainError("lift_jacobian targets a curved space")


def projection_jacobian(q, space: SpaceSpec) -> np.ndarray:
    """2x3 differential of central_project_down at an ambient point."""
    x, y, z = np.asarray(q, dtype=float)
    if space.kind is Kind.SPHERE_SOUTH and z >= -BOUNDARY_GUARD:
        raise DomainError("differential undefined at the equator")
    return np.array([[-1.0 / z, 0.0, x / (z * z)], [0.0, -1.0 / z, y / (z * z)]])


def pushforward_velocity(
    vec: TangentVector, direction: Direction, space: SpaceSpec
) -> TangentVector:
    """Apply the differential of the central projection to a velocity.

    This is the geometric differential only; the time reparametrization
    between the two systems is applied separately via reparametrize_rate.
    """
    if direction is Direction.UP:
        pc = vec.base.require(Chart.GNOMONIC)
        jac = lift_jacobian(pc, space)
        new_base = central_lift_up(vec.base, space)
        return TangentVector(new_base, jac @ vec.components)
    qc = vec.base.require(Chart.AMBIENT3)
    jac = projection_jacobian(qc, space)
    new_base = central_project_down(vec.base, space)
    return TangentVector(new_base, jac @ vec.components)


def reparametrize_rate(p, space: SpaceSpec) -> float:
    """Squared chart norm |p~|^2 giving d/dtau = |p~|^2 d/dt.

    Sphere: x^2 + y^2 + 1 (Euclidean norm of (x, y, -1)).
    Hyperboloid: 1 - x^2 - y^2 (Minkowski norm squared); the plane is its
    own system, rate 1.
    """
    if isinstance(p, ChartPoint):
        p = p.require(Chart.GNOMONIC)
    x, y = np.asarray(p, dtype=float)
    if space.kind is Kind.SPHERE_SOUTH:
        return float(x * x + y * y + 1.0)
    if space.kind is Kind.HYPERBOLOID_LOWER:
        rate = 1.0 - x * x - y * y
        if rate <= 0.0:
            raise DomainError("time-change factor vanishes at the Klein boundary")
        return float(rate)
    return 1.0


def stereographic_chart(q: ChartPoint, space: SpaceSpec) -> ChartPoint:
    """Stereographic projection from (0, 0, 1) onto the plane z = 0.

    The south hemisphere maps into the unit disc; the lower hyperboloid
    sheet maps onto the open unit disc (Poincare model).
    """
    x, y, z = q.require(Chart.AMBIENT3)
    if space.kind is Kind.SPHERE_SOUTH:
        if z >= 1.0 - BOUNDARY_GUARD:
            raise DomainError("stereographic projection undefined at the north pole")
    elif space.kind is Kind.HYPERBOLOID_LOWER:
        if z >= 0.0:
            raise DomainError("expected a lower-sheet point")
    else:
        raise DomainError("stereographic_chart expects a curved space")
    return ChartPoint(Chart.STEREOGRAPHIC, (x / (1.0 - z), y / (1.0 - z)))


def stereographic_inverse(p: ChartPoint, space: SpaceSpec) -> ChartPoint:
    """Inverse stereographic projection back to the manifold."""
    u, v = p.require(Chart.STEREOGRAPHIC)
    rho = u * u + v * v
    if space.kind is Kind.SPHERE_SOUTH:
        d = 1.0 + rho
        return ChartPoint(Chart.AMBIENT3, (2.0 * u / d, 2.0 * v / d, (rho - 1.0) / d))
    if space.kind is Kind.HYPERBOLOID_LOWER:
        d = 1.0 - rho
        if d <= BOUNDARY_GUARD:
            raise DomainError("point outside the Poincare disc")
        return ChartPoint(Chart.AMBIENT3, (2.0 * u / d, 2.0 * v / d, -(1.0 + rho) / d))
    raise DomainError("stereographic_inverse targets a curved space")


def metric_inner(u, v, base: ChartPoint, space: SpaceSpec) -> float:
    """Kinetic-metric pairing of two tangent vectors at a common point."""
    if space.kind is Kind.PLANE_AFFINE:
        return affine_inner(u, v, space)
    if space.kind is Kind.SPHERE_SOUTH:
        return float(np.dot(u, v))
    return minkowski_inner(u, v)
