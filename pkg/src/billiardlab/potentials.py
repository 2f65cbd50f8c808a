"""Force fields and energies for the Kepler, Hooke and Lagrange problems.

The planar problem on ``(V, |.|_a)`` has force function

    U = m1/|p - Z1|_a + m2/|p - Z2|_a + f |p|_a^2,

with Kepler centers ``Z1 = (0, a)``, ``Z2 = (0, -a)`` and the Hooke
center at their midpoint, the origin.  Its curved partners replace the
Kepler terms by ``mh * cot(theta)`` (sphere) / ``mh * coth(theta)``
(hyperboloid) and the Hooke term by ``f tan^2`` / ``f tanh^2`` of the
angle from the vertical pole.  Projecting down divides the Kepler masses
by ``sqrt(1 + s a^2)`` and leaves the Hooke strength alone.

The two chart energies evaluated on one shared chart state form the pair
of first integrals certified by the billiard experiments: each is a
conserved quantity of *both* systems, and the pair is functionally
independent away from a measure-zero velocity set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError
from .spaces import (
    Chart,
    ChartPoint,
    Kind,
    SpaceSpec,
    TangentVector,
    affine_inner,
    affine_norm,
    central_lift_up,
    central_project_down,
    minkowski_inner,
    projection_jacobian,
    reparametrize_rate,
)

# Trajectories entering this chart-unit radius around a Kepler center
# terminate instead of being regularized.
COLLISION_GUARD = 1e-9
EQUATOR_GUARD = 1e-9


@dataclass(frozen=True)
class LagrangeParams:
    """Mass factors of a Lagrange problem in its native geometry.

    ``m1, m2`` multiply the Kepler terms (planar m or curved m-hat,
    depending on which space the parameters describe), ``f`` the Hooke
    term.  ``a`` is the center half-separation in the gnomonic chart;
    it must agree with the ``a`` of the SpaceSpec the parameters are
    used with.  Negative masses (repulsive forces) are allowed.
    """

    m1: float
    m2: float
    f: float
    a: float

    def centers_chart(self) -> np.ndarray:
        """Kepler centers and Hooke midpoint in the gnomonic chart."""
        return np.array([[0.0, self.a], [0.0, -self.a], [0.0, 0.0]])

    def centers_ambient(self, space: SpaceSpec) -> np.ndarray:
        """Lifted centers on the curved manifold (rows: Z1, Z2, Zmid)."""
        return np.array(
            [
                central_lift_up(ChartPoint(Chart.GNOMONIC, c), space).coords
                for c in self.centers_chart()
            ]
        )

    def single_terms(self):
        """The three one-parameter subproblems whose superposition this is."""
        return (
            LagrangeParams(self.m1, 0.0, 0.0, self.a),
            LagrangeParams(0.0, self.m2, 0.0, self.a),
            LagrangeParams(0.0, 0.0, self.f, self.a),
        )


@dataclass(frozen=True)
class EnergyPair:
    """Energies of a system and of its projective partner, evaluated on
    the shared chart state.  Both are first integrals of either flow."""

    e_native: float
    e_partner: float


def projected_mass(mhat: float, a: float, sign: int) -> float:
    """Planar Kepler mass of a projected curved Kepler problem,
    m = mhat / sqrt(1 + sign*a^2)."""
    denom = 1.0 + sign * a * a
    if denom <= 0.0:
        raise DomainError(f"1 + sign*a^2 = {denom} <= 0")
    return mhat / math.sqrt(denom)


def params_down(params: LagrangeParams, space: SpaceSpec) -> LagrangeParams:
    """Planar parameters of the projection of a curved Lagrange problem."""
    s = space.sign if space.kind is not Kind.PLANE_AFFINE else space.pair_sign
    return LagrangeParams(
        projected_mass(params.m1, params.a, s),
        projected_mass(params.m2, params.a, s),
        params.f,
        params.a,
    )


def params_up(params: LagrangeParams, space: SpaceSpec) -> LagrangeParams:
    """Curved parameters whose projection has the given planar masses."""
    s = space.sign if space.kind is not Kind.PLANE_AFFINE else space.pair_sign
    root = math.sqrt(1.0 + s * params.a * params.a)
    return LagrangeParams(params.m1 * root, params.m2 * root, params.f, params.a)


def _check_a(params: LagrangeParams, space: SpaceSpec):
    if abs(params.a - space.a) > 1e-14:
        raise ValueError(
            f"params.a = {params.a} disagrees with space.a = {space.a}"
        )


def force_plane(p, params: LagrangeParams, space: SpaceSpec) -> np.ndarray:
    """Planar Lagrange force field at a chart point.

    Superposition of the two Kepler fields -m_i |p - Z_i|_a^{-3} (p - Z_i)
    and the Hooke field 2 f p; the latter is independent of ``a``.
    """
    _check_a(params, space)
    p = np.asarray(p, dtype=float)
    out = 2.0 * params.f * p
    for m, center in ((params.m1, (0.0, params.a)), (params.m2, (0.0, -params.a))):
        if m == 0.0:
            continue
        d = p - center
        if np.hypot(*d) < COLLISION_GUARD:
            raise SingularityError(
                f"within collision guard of Kepler center {center}",
                which="center1" if center[1] > 0 else "center2",
                location=p,
            )
        out = out - m * affine_norm(d, space) ** -3 * d
    return out


def _sphere_cosines(q, params: LagrangeParams, space: SpaceSpec):
    zs = params.centers_ambient(space)
    return zs, np.array([float(np.dot(q, z)) for z in zs])


def _hyper_coshes(q, params: LagrangeParams, space: SpaceSpec):
    zs = params.centers_ambient(space)
    return zs, np.array([-minkowski_inner(q, z) for z in zs])


def _guard_curved(q, params: LagrangeParams, space: SpaceSpec, cs):
    names = ("center1", "center2")
    for i, m in enumerate((params.m1, params.m2)):
        if m == 0.0:
            continue
        if space.kind is Kind.SPHERE_SOUTH:
            sin2 = 1.0 - cs[i] * cs[i]
        else:
            sin2 = cs[i] * cs[i] - 1.0
        if sin2 < COLLISION_GUARD**2:
            raise SingularityError(
                "within collision guard of a Kepler center or its antipode",
                which=names[i],
                location=np.asarray(q),
            )
    if params.f != 0.0 and space.kind is Kind.SPHERE_SOUTH:
        if abs(q[2]) < EQUATOR_GUARD:
            raise SingularityError(
                "Hooke term singular at the equator",
                which="equator",
                location=np.asarray(q),
            )


def make_curved_force(params: LagrangeParams, space: SpaceSpec):
    """Fast closure q -> force components, with the centers prelifted."""
    _check_a(params, space)
    if space.kind is Kind.SPHERE_SOUTH:
        curv = +1.0
    elif space.kind is Kind.HYPERBOLOID_LOWER:
        curv = -1.0
    else:
        raise DomainError("make_curved_force expects a curved space")
    zs = params.centers_ambient(space)

    def force(q: np.ndarray) -> np.ndarray:
        if curv > 0.0:
            cs = zs @ q
        else:
            cs = zs[:, 0] * q[0] + zs[:, 1] * q[1] - zs[:, 2] * q[2]
            cs = -cs
        _guard_curved(q, params, space, cs)
        out = np.zeros(3)
        for m, z, c in ((params.m1, zs[0], cs[0]), (params.m2, zs[1], cs[1])):
            if m == 0.0:
                continue
            sin2 = curv * (1.0 - c * c)      # sin^2 or sinh^2 of theta
            out = out + m * sin2**-1.5 * (z - c * q)
        if params.f != 0.0:
            out = out - 2.0 * params.f / cs[2] ** 3 * (zs[2] - cs[2] * q)
        return out

    return force


def force_curved(q, params: LagrangeParams, space: SpaceSpec) -> TangentVector:
    """Curved Lagrange force field as a tangent vector at q.

    Each term is the manifold gradient of its force function
    (mh*cot/f*tan^2 on the sphere, mh*coth/f*tanh^2 on the hyperboloid),
    i.e. the ambient gradient followed by the tangent projection.  The
    Kepler strength is mh/sin^2(theta) toward the center, the Hooke
    strength 2 f sin(theta)/cos^3(theta) away from the pole (sinh, cosh
    analogues on the hyperboloid).
    """
    if isinstance(q, ChartPoint):
        q = q.require(Chart.AMBIENT3)
    q = np.asarray(q, dtype=float)
    out = make_curved_force(params, space)(q)
    return TangentVector(ChartPoint(Chart.AMBIENT3, q), out)


def force_function_plane(p, params: LagrangeParams, space: SpaceSpec) -> float:
    """Planar force function U (negative of the potential)."""
    _check_a(params, space)
    p = np.asarray(p, dtype=float)
    u = params.f * affine_inner(p, p, space)
    for m, center in ((params.m1, (0.0, params.a)), (params.m2, (0.0, -params.a))):
        if m == 0.0:
            continue
        d = p - center
        r = affine_norm(d, space)
        if np.hypot(*d) < COLLISION_GUARD:
            raise SingularityError(
                "force function singular at a Kepler center", location=p
            )
        u += m / r
    return float(u)


def force_function_curved(q, params: LagrangeParams, space: SpaceSpec) -> float:
    """Curved force function mh1*cot + mh2*cot + f*tan^2 (or coth/tanh^2)."""
    _check_a(params, space)
    if isinstance(q, ChartPoint):
        q = q.require(Chart.AMBIENT3)
    q = np.asarray(q, dtype=float)
    if space.kind is Kind.SPHERE_SOUTH:
        zs, cs = _sphere_cosines(q, params, space)
        curv = +1.0
    else:
        zs, cs = _hyper_coshes(q, params, space)
        curv = -1.0
    _guard_curved(q, params, space, cs)
    u = 0.0
    for m, c in ((params.m1, cs[0]), (params.m2, cs[1])):
        if m == 0.0:
            continue
        u += m * c / math.sqrt(curv * (1.0 - c * c))
    if params.f != 0.0:
        u += params.f * curv * (1.0 - cs[2] ** 2) / cs[2] ** 2
    return float(u)


def energy_plane(p, v, params: LagrangeParams, space: SpaceSpec) -> float:
    """Planar Lagrange energy E = |v|_a^2/2 - U(p) on a chart state."""
    v = np.asarray(v, dtype=float)
    kinetic = 0.5 * affine_inner(v, v, space)
    return kinetic - force_function_plane(p, params, space)


def energy_curved_in_chart(p, v, params: LagrangeParams, space: SpaceSpec) -> float:
    """Curved-partner energy expressed on a gnomonic chart state.

    Sphere (s = +1):

        E = ((1 + y^2) vx^2 - 2 x y vx vy + (1 + x^2) vy^2)/2
            - mh1 (a y + 1)/sqrt((y - a)^2 + (1 + a^2) x^2)
            - mh2 (1 - a y)/sqrt((y + a)^2 + (1 + a^2) x^2)
            - f (x^2 + y^2)

    The hyperboloid variant flips the sign s in every coefficient; it is
    certified against the ambient energy and the conservation oracle in
    the test suite rather than taken on faith.  ``params`` are the
    *curved* masses mh.
    """
    _check_a(params, space)
    if space.kind is Kind.PLANE_AFFINE:
        raise DomainError("energy_curved_in_chart wants the curved space spec")
    s = float(space.sign)
    x, y = np.asarray(p, dtype=float)
    vx, vy = np.asarray(v, dtype=float)
    a = params.a
    kinetic = 0.5 * (
        (1.0 + s * y * y) * vx * vx
        - 2.0 * s * x * y * vx * vy
        + (1.0 + s * x * x) * vy * vy
    )
    if space.kind is Kind.HYPERBOLOID_LOWER and x * x + y * y >= 1.0:
        raise DomainError("chart state outside the Klein disc")
    u = params.f * (x * x + y * y)
    for m, sgn in ((params.m1, +1.0), (params.m2, -1.0)):
        if m == 0.0:
            continue
        denom2 = (y - sgn * a) ** 2 + (1.0 + s * a * a) * x * x
        if denom2 < COLLISION_GUARD**2:
            raise SingularityError(
                "chart energy singular at a Kepler center", location=np.array([x, y])
            )
        u += m * (s * sgn * a * y + 1.0) / math.sqrt(denom2)
    return float(kinetic - u)


def partner_plane_energy_ambient(q, v, params: LagrangeParams, space: SpaceSpec) -> float:
    """Planar-partner energy evaluated in ambient curved variables.

    This is the analytic extension of the planar energy through the
    central projection: with s the curvature sign, d = 1 + s a^2 and
    planar masses m_i = mh_i / sqrt(d),

        kinetic = ((d x'^2 + y'^2) z^2 - 2 z z' (d x x' + y y')
                   + z'^2 (d x^2 + y^2)) / (2 d)
        potential terms:  m_i z sqrt(d) / sqrt(d x^2 + (y +- a z)^2)
                          - f (d x^2 + y^2) / (d z^2)

    On the south hemisphere / lower sheet this agrees with energy_plane
    composed with the projection; on the sphere it extends to all of S
    minus the singular set (centers, antipodes, and the equator when
    f != 0).  Velocities are with respect to the curved system's time.
    """
    _check_a(params, space)
    if isinstance(q, ChartPoint):
        q = q.require(Chart.AMBIENT3)
    if isinstance(v, TangentVector):
        v = v.components
    x, y, z = np.asarray(q, dtype=float)
    xp, yp, zp = np.asarray(v, dtype=float)
    s = float(space.sign)
    if s == 0.0:
        raise DomainError("expects a curved-space state")
    a = params.a
    d = 1.0 + s * a * a
    if params.f != 0.0 and abs(z) < EQUATOR_GUARD:
        raise SingularityError("extension singular at the equator", which="equator")
    kinetic = (
        (d * xp * xp + yp * yp) * z * z
        - 2.0 * z * zp * (d * x * xp + y * yp)
        + zp * zp * (d * x * x + y * y)
    ) / (2.0 * d)
    planar = params_down(params, space)
    u = 0.0
    for m, sgn in ((planar.m1, +1.0), (planar.m2, -1.0)):
        if m == 0.0:
            continue
        denom2 = d * x * x + (y + sgn * a * z) ** 2
        if denom2 < COLLISION_GUARD**2:
            raise SingularityError(
                "extension singular at a Kepler center or antipode",
                location=np.array([x, y, z]),
            )
        # -m/|p - Z|_a pulled through p = (-x/z, -y/z); z < 0 absorbs |z|.
        u += -m * z * math.sqrt(d) / math.sqrt(denom2)
    if planar.f != 0.0:
        u += planar.f * (d * x * x + y * y) / (d * z * z)
    return float(kinetic - u)


def extended_integral_on_sphere(q, v, params: LagrangeParams, space: SpaceSpec) -> float:
    """Planar-energy integral on the whole sphere minus its singular set."""
    if space.kind is not Kind.SPHERE_SOUTH:
        raise DomainError("extended integral is the spherical extension")
    return partner_plane_energy_ambient(q, v, params, space)


def native_energy_ambient(q, v, params: LagrangeParams, space: SpaceSpec) -> float:
    """Curved-native energy |v|_g^2/2 - U(q) in ambient coordinates."""
    if isinstance(q, ChartPoint):
        q = q.require(Chart.AMBIENT3)
    if isinstance(v, TangentVector):
        v = v.components
    v = np.asarray(v, dtype=float)
    if space.kind is Kind.SPHERE_SOUTH:
        kinetic = 0.5 * float(np.dot(v, v))
    elif space.kind is Kind.HYPERBOLOID_LOWER:
        kinetic = 0.5 * minkowski_inner(v, v)
    else:
        raise DomainError("native_energy_ambient expects a curved space")
    return kinetic - force_function_curved(q, params, space)


def energy_pair(pos: ChartPoint, vel: TangentVector, params: LagrangeParams,
                space: SpaceSpec) -> EnergyPair:
    """The (native, partner) first-integral pair for a state.

    Planar states: native is the planar energy; the partner is the curved
    chart energy of the lifted problem (masses scaled up), evaluated on
    the very same chart state.  Curved states: native is the ambient
    energy; the partner is the analytically extended planar energy, so it
    stays defined near the chart's degeneracies.
    """
    if space.kind is Kind.PLANE_AFFINE:
        p = pos.require(Chart.GNOMONIC)
        v = vel.components
        e_nat = energy_plane(p, v, params, space)
        e_par = energy_curved_in_chart(p, v, params_up(params, space), space.partner())
        return EnergyPair(e_nat, e_par)
    q = pos.require(Chart.AMBIENT3)
    v = vel.components
    e_nat = native_energy_ambient(q, v, params, space)
    e_par = partner_plane_energy_ambient(q, v, params, space)
    return EnergyPair(e_nat, e_par)


def project_force_down(q, f_curved, space: SpaceSpec) -> np.ndarray:
    """Recover the planar force from a curved one: F_V = Dproj(F_S)/rate^2.

    Inverse of the projection rule F_S = P_q(|p~|^3 F_V): the projection
    differential kills the radial part and contributes one factor 1/|p~|,
    leaving the time-change factor |p~|^2 squared.
    """
    qq = q if isinstance(q, ChartPoint) else ChartPoint(Chart.AMBIENT3, q)
    if isinstance(f_curved, TangentVector):
        f_curved = f_curved.components
    p = central_project_down(qq, space)
    rate = reparametrize_rate(p, space)
    jac = projection_jacobian(qq.coords, space)
    return (jac @ np.asarray(f_curved)) / rate**2
