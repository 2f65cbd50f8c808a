"""Conformal Hooke-Kepler correspondences in stereographic charts.

The sphere is charted stereographically from the north pole onto the
plane z = 0 (metric ``4/(1+|q|^2)^2 |dq|^2``); the lower hyperboloid
sheet maps onto the Poincare disc (metric ``4/(1-|q|^2)^2 |dq|^2``).
With sigma = +1 (sphere) / -1 (hyperbolic), the Hooke-type shell
Hamiltonian is

    H(z, w) = (1 + sigma |z|^2)^2 |w|^2 / 8 + 4 f |z|^2 / (1 - sigma |z|^2)^2

and its level-mh orbits map under the cotangent-lifted square map
``(z, w) -> (z^2, w / (2 conj(z)))`` onto the level ``-(4f + sigma 2 mh)``
of the quadruple-scaled hyperbolic Kepler Hamiltonian

    Hk(q, p) = (1 - |q|^2)^2 |p|^2 / 2 - mh (1 + |q|^2) / |q|,

whose flow traces ordinary hyperbolic-Kepler orbits (the scale only
reparametrizes time).  The spherical and hyperbolic Hooke problems are
related in the same chart with no coordinate change: the spherical
f-problem on level mh has the orbits of the hyperbolic problem with
strength f + mh on level mh.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError
from .spaces import (
    Chart,
    ChartPoint,
    SpaceSpec,
    central_project_down,
    stereographic_chart,
    stereographic_inverse,
)

BLOWUP_GUARD = 1e-9


class ChartSystemKind(enum.Enum):
    SPHERE_STEREO = "sphere-stereographic"
    HYPERBOLIC_POINCARE = "hyperbolic-poincare"


@dataclass(frozen=True)
class ChartSystem:
    """A conformal chart with factor 4/(1 + sigma |q|^2)^2."""

    kind: ChartSystemKind

    @property
    def sigma(self) -> int:
        return +1 if self.kind is ChartSystemKind.SPHERE_STEREO else -1

    def conformal_factor(self, q: complex) -> float:
        rho = abs(q) ** 2
        denom = 1.0 + self.sigma * rho
        if denom <= BLOWUP_GUARD:
            raise DomainError("conformal factor blows up here")
        return 4.0 / denom**2


class SystemKind(enum.Enum):
    SPHERICAL_HOOKE = "spherical-hooke"
    HYPERBOLIC_HOOKE = "hyperbolic-hooke"
    HYPERBOLIC_KEPLER = "hyperbolic-kepler"


@dataclass(frozen=True)
class ConformalSystem:
    """One of the three conformally related chart systems.

    ``strength`` is f for the Hooke systems and mh for the Kepler one.
    """

    which: SystemKind
    strength: float

    @property
    def sigma(self) -> int:
        if self.which is SystemKind.SPHERICAL_HOOKE:
            return +1
        return -1


def square_map(z: complex, w: complex) -> tuple[complex, complex]:
    """Cotangent lift of the complex square: (z, w) -> (z^2, w/(2 conj(z)))."""
    if z == 0:
        raise DomainError("square map is singular at the branch point z = 0")
    return z * z, w / (2.0 * np.conj(z))


def hamiltonian(sys: ConformalSystem, z: complex, w: complex) -> float:
    """Value of the system's chart Hamiltonian at a phase point.

    Hooke systems: kinetic (1 + sigma|z|^2)^2 |w|^2/8 plus the potential
    4 f |z|^2/(1 - sigma|z|^2)^2.  Kepler: the quadruple-scaled
    (1 - |z|^2)^2 |w|^2/2 - mh (1 + |z|^2)/|z| whose conserved value is
    exactly the -(4f +- 2mh) bookkeeping level.
    """
    rho = abs(z) ** 2
    p2 = abs(w) ** 2
    if sys.which is SystemKind.HYPERBOLIC_KEPLER:
        if abs(z) < BLOWUP_GUARD:
            raise DomainError("Kepler center reached")
        if 1.0 - rho <= BLOWUP_GUARD:
            raise DomainError("state at the Poincare disc boundary")
        return (1.0 - rho) ** 2 * p2 / 2.0 - sys.strength * (1.0 + rho) / abs(z)
    s = sys.sigma
    denom = 1.0 - s * rho
    if abs(denom) <= BLOWUP_GUARD or (s < 0 and 1.0 + s * rho <= BLOWUP_GUARD):
        raise DomainError("state at the chart blow-up circle")
    return (1.0 + s * rho) ** 2 * p2 / 8.0 + 4.0 * sys.strength * rho / denom**2


def hamiltonian_on_shell(sys: ConformalSystem, z: complex, w: complex,
                         level: float) -> float:
    """Shell function H - level; zero on the chosen energy level."""
    return hamiltonian(sys, z, w) - level


def energy_level_relation(f: float, mhat: float, sign: int) -> float:
    """Kepler-side level -(4f + sign*2*mh) of the mapped Hooke mh-shell."""
    return -(4.0 * f + sign * 2.0 * mhat)


def hooke_partner_strength(f: float, mhat: float) -> float:
    """Hyperbolic Hooke strength f + mh orbit-equivalent to the spherical
    f-problem on its mh-level (same chart coordinates, time change only)."""
    return f + mhat


def _hamilton_rhs(sys: ConformalSystem):
    """Hamilton's equations for the real phase (x, y, px, py)."""
    if sys.which is SystemKind.HYPERBOLIC_KEPLER:
        mh = sys.strength

        def rhs(t, u):
            x, y, px, py = u
            rho = x * x + y * y
            p2 = px * px + py * py
            r = math.sqrt(rho)
            # dH/drho for H = (1-rho)^2 p^2/2 - mh (1+rho)/sqrt(rho)
            dh_drho = -(1.0 - rho) * p2 + mh * (1.0 - rho) / (2.0 * rho * r)
            hp = (1.0 - rho) ** 2
            return [hp * px, hp * py, -2.0 * x * dh_drho, -2.0 * y * dh_drho]

        return rhs

    s, f = float(sys.sigma), sys.strength

    def rhs(t, u):
        x, y, px, py = u
        rho = x * x + y * y
        p2 = px * px + py * py
        dh_drho = (
            s * (1.0 + s * rho) * p2 / 4.0
            + 4.0 * f * (1.0 + s * rho) / (1.0 - s * rho) ** 3
        )
        kp = (1.0 + s * rho) ** 2 / 4.0
        return [kp * px, kp * py, -2.0 * x * dh_drho, -2.0 * y * dh_drho]

    return rhs


def integrate_system(sys: ConformalSystem, z0: complex, w0: complex,
                     t_span: float, n_samples: int = 2000,
                     rtol: float = 1e-13, atol: float = 1e-13):
    """Integrate the chart Hamiltonian flow; returns (times, z, w) arrays."""
    u0 = [z0.real, z0.imag, w0.real, w0.imag]
    sol = solve_ivp(
        _hamilton_rhs(sys), (0.0, t_span), u0, method="DOP853",
        t_eval=np.linspace(0.0, t_span, n_samples), rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise DomainError(f"conformal integration failed: {sol.message}")
    z = sol.y[0] + 1j * sol.y[1]
    w = sol.y[2] + 1j * sol.y[3]
    return sol.t, z, w


def _flow_curve(sys: ConformalSystem, t: np.ndarray, z: np.ndarray,
                w: np.ndarray) -> CubicHermiteSpline:
    """Hermite-in-time interpolant of the orbit positions."""
    rhs = _hamilton_rhs(sys)
    pos = np.column_stack([z.real, z.imag])
    vel = np.empty_like(pos)
    for k in range(len(t)):
        du = rhs(t[k], [z[k].real, z[k].imag, w[k].real, w[k].imag])
        vel[k] = du[:2]
    return CubicHermiteSpline(t, pos, vel, axis=0)


def orbit_distance(points: np.ndarray, sys: ConformalSystem, t: np.ndarray,
                   z: np.ndarray, w: np.ndarray) -> float:
    """Max over points of the distance to the interpolated orbit curve.

    Each point gets a coarse nearest-sample guess refined by Newton
    iterations on the stationarity condition (gamma(t) - p) . gamma'(t),
    so the measurement is not limited by the sample spacing.
    """
    curve = _flow_curve(sys, t, z, w)
    dcurve = curve.derivative()
    d2curve = dcurve.derivative()
    samples = np.column_stack([z.real, z.imag])
    worst = 0.0
    for p in np.asarray(points, dtype=float):
        k = int(np.argmin(np.sum((samples - p) ** 2, axis=1)))
        tk = t[k]
        lo = t[max(k - 2, 0)]
        hi = t[min(k + 2, len(t) - 1)]
        for _ in range(60):
            r = curve(tk) - p
            dr = dcurve(tk)
            g = float(np.dot(r, dr))
            gp = float(np.dot(dr, dr) + np.dot(r, d2curve(tk)))
            if gp <= 0.0:
                break
            t_next = min(max(tk - g / gp, lo), hi)
            if abs(t_next - tk) < 1e-14 * max(1.0, abs(tk)):
                tk = t_next
                break
            tk = t_next
        worst = max(worst, float(np.linalg.norm(curve(tk) - p)))
    return worst


def verify_orbit_correspondence(
    hooke_sys: ConformalSystem,
    z0: complex,
    w0: complex,
    t_span: float,
    kepler_t_span: float | None = None,
    n_samples: int = 1500,
) -> dict:
    """Integrate a Hooke orbit, map it, and measure the orbital deviation
    from the independently integrated partner system.

    For the Hooke -> hyperbolic-Kepler pairings the positions are mapped
    by z -> z^2 and compared (arc-length point sets) against the Kepler
    flow on the -(4f + sigma 2mh) level started from the mapped phase
    point.  The sphere/hyperbolic Hooke pairing compares orbits in the
    same coordinates with strength f + mh on the partner side.
    Returns the deviation together with the level bookkeeping.
    """
    if hooke_sys.which is SystemKind.HYPERBOLIC_KEPLER:
        raise DomainError("start from a Hooke system")
    mhat = hamiltonian(hooke_sys, z0, w0)
    f = hooke_sys.strength
    sigma = hooke_sys.sigma
    level = energy_level_relation(f, mhat, sigma)

    t, z, _ = integrate_system(hooke_sys, z0, w0, t_span, n_samples)
    q0, p0 = square_map(z0, w0)
    kepler = ConformalSystem(SystemKind.HYPERBOLIC_KEPLER, mhat)
    level_check = hamiltonian(kepler, q0, p0) - level

    images = np.column_stack([(z * z).real, (z * z).imag])
    span_b = kepler_t_span if kepler_t_span is not None else 4.0 * t_span
    tb, qb, wb = integrate_system(kepler, q0, p0, span_b, 6 * n_samples)
    drift = max(
        abs(hamiltonian(kepler, qq, ww) - level) for qq, ww in zip(qb[::37], wb[::37])
    )
    deviation = orbit_distance(images, kepler, tb, qb, wb)
    return {
        "deviation": deviation,
        "level": level,
        "level_residual_at_start": float(level_check),
        "partner_drift": float(drift),
        "hooke_energy": mhat,
    }


def verify_hooke_hooke_correspondence(
    f: float, z0: complex, w0: complex, t_span: float,
    partner_t_span: float | None = None, n_samples: int = 1500,
) -> dict:
    """Spherical Hooke f-orbit vs hyperbolic Hooke (f + mh)-orbit, same chart."""
    sph = ConformalSystem(SystemKind.SPHERICAL_HOOKE, f)
    mhat = hamiltonian(sph, z0, w0)
    hyp = ConformalSystem(SystemKind.HYPERBOLIC_HOOKE, hooke_partner_strength(f, mhat))
    level_residual = hamiltonian(hyp, z0, w0) - mhat

    t, z, _ = integrate_system(sph, z0, w0, t_span, n_samples)
    span_b = partner_t_span if partner_t_span is not None else 4.0 * t_span
    tb, zb, wb = integrate_system(hyp, z0, w0, span_b, 6 * n_samples)
    drift = max(
        abs(hamiltonian(hyp, qq, ww) - mhat) for qq, ww in zip(zb[::37], wb[::37])
    )
    pts = np.column_stack([z.real, z.imag])
    return {
        "deviation": orbit_distance(pts, hyp, tb, zb, wb),
        "level_residual_at_start": float(level_residual),
        "partner_drift": float(drift),
        "hooke_energy": mhat,
    }


# -- Prop-style confocal image check -------------------------------------------

def _rotated_klein_samples(a: float, b: float, n: int, margin: float = 1e-3):
    """Points of the source conic inside the rotated-frame Klein disc.

    The family lives on the tangent plane of the rotated Minkowski frame:
    u^2 / ((B^2 - a^2)/(1 - a^2)) + v^2 / B^2 = 1 (hyperbola for B < a).
    """
    ta2 = (b * b - a * a) / (1.0 - a * a)
    tb2 = b * b
    if ta2 > 0.0:
        theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        pts = np.column_stack(
            [math.sqrt(ta2) * np.cos(theta), math.sqrt(tb2) * np.sin(theta)]
        )
    else:
        u = np.linspace(-2.5, 2.5, n)
        x = math.sqrt(-ta2) * np.sinh(u)
        y = math.sqrt(tb2) * np.cosh(u)
        pts = np.vstack(
            [np.column_stack([x, y]), np.column_stack([x, -y])]
        )
    keep = np.sum(pts * pts, axis=1) < 1.0 - margin
    pts = pts[keep]
    if len(pts) < 8:
        raise DomainError("too few conic samples inside the Klein disc")
    return pts


def _unrotate_to_hyperboloid(pts2: np.ndarray, a: float) -> np.ndarray:
    """Lift rotated Klein points and undo the Minkowski frame rotation."""
    root = math.sqrt(1.0 - a * a)
    out = []
    for u, v in pts2:
        r = math.sqrt(1.0 - u * u - v * v)
        uu, vv, ww = u / r, v / r, -1.0 / r
        x = uu
        y = (vv - a * ww) / root
        z = (-a * vv + ww) / root
        out.append((x, y, z))
    return np.array(out)


def g_factor_coefficients(a: float, b: float) -> dict:
    """Diagonal coefficients of the two conic factors in the rotated
    gnomonic frame X = (x + y)/sqrt(2), Y = (x - y)/sqrt(2).

    The image factor G2 = l1 X^2 + l2 Y^2 - 1 carries the mapped curves;
    its foci sit at 2 sqrt(a)/(1 - a) independently of B.  The spurious
    factor G1 = m1 X^2 + m2 Y^2 - 1 has both coefficients negative for
    ellipse members (no real points).
    """
    l1 = (a - 1.0) * (b - 1.0) / (2.0 * (b + a))
    l2 = -(a + 1.0) * (b - 1.0) / (2.0 * (b - a))
    m1 = (a - 1.0) * (b + 1.0) / (2.0 * (b - a))
    m2 = -(a + 1.0) * (b + 1.0) / (2.0 * (b + a))
    return {"g2": (l1, l2), "g1": (m1, m2)}


def predicted_focus(a: float) -> float:
    """Common chart focus distance 2 sqrt(a)/(1 - a) of the image family."""
    return 2.0 * math.sqrt(a) / (1.0 - a)


def measured_focus_from_fit(lam1: float, lam2: float) -> float:
    """Focus distance of l1 X^2 + l2 Y^2 = 1 in the compatible norm
    |(X, Y)|_c^2 = X^2/(1 + c^2) + Y^2: c^2 = (P - Q)/(1 + Q) with
    P = 1/l1, Q = 1/l2."""
    p, q = 1.0 / lam1, 1.0 / lam2
    c2 = (p - q) / (1.0 + q)
    if c2 < 0.0:
        raise DomainError("fit produced an x-degenerate conic")
    return math.sqrt(c2)


def confocal_image_check(a: float, b: float, n_samples: int = 200,
                         margin: float = 1e-3) -> dict:
    """Verify that the squared image of a focused hyperbolic conic is a
    centered spherical conic of the predicted confocal family.

    Chain of already-tested chart maps: rotated Klein sample -> lower
    hyperboloid sheet -> Poincare disc -> complex square -> sphere (as
    stereographic coordinates) -> gnomonic chart -> 45-degree rotation.
    Checks the image-factor residual, the measured common foci
    2 sqrt(a)/(1-a), and that the spurious factor stays away from zero
    (it is empty of real points for ellipse members).
    """
    if not (0.0 < a < 1.0):
        raise DomainError("need 0 < a < 1")
    hyp = SpaceSpec.hyperboloid(a)
    sph = SpaceSpec.sphere(a)
    src = _rotated_klein_samples(a, b, n_samples, margin)
    ambient = _unrotate_to_hyperboloid(src, a)

    rotated = []
    for q in ambient:
        poincare = stereographic_chart(ChartPoint(Chart.AMBIENT3, q), hyp).coords
        zc = complex(poincare[0], poincare[1]) ** 2
        sphere_pt = stereographic_inverse(
            ChartPoint(Chart.STEREOGRAPHIC, (zc.real, zc.imag)), sph
        )
        gnom = central_project_down(sphere_pt, sph).coords
        rotated.append(
            ((gnom[0] + gnom[1]) / math.sqrt(2.0),
             (gnom[0] - gnom[1]) / math.sqrt(2.0))
        )
    rotated = np.array(rotated)

    coeff = g_factor_coefficients(a, b)
    l1, l2 = coeff["g2"]
    m1, m2 = coeff["g1"]
    x2, y2 = rotated[:, 0] ** 2, rotated[:, 1] ** 2
    g2_res = np.max(np.abs(l1 * x2 + l2 * y2 - 1.0))
    g1_vals = m1 * x2 + m2 * y2 - 1.0

    # least-squares conic fit for the measured foci
    design = np.column_stack([x2, y2])
    fit, *_ = np.linalg.lstsq(design, np.ones(len(rotated)), rcond=None)
    c_measured = measured_focus_from_fit(fit[0], fit[1])

    g1_empty = (m1 < 0.0) and (m2 < 0.0)
    return {
        "a": a,
        "b": b,
        "n_points": int(len(rotated)),
        "g2_residual": float(g2_res),
        "focus_measured": float(c_measured),
        "focus_predicted": predicted_focus(a),
        "focus_error": float(abs(c_measured - predicted_focus(a))),
        "g1_empty_of_real_points": bool(g1_empty),
        "g1_min_abs_on_samples": float(np.min(np.abs(g1_vals))),
        "fit_coefficients": (float(fit[0]), float(fit[1])),
    }
