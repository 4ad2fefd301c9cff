"""Flatness maps: flat-output samples -> robot states and inputs.

A flat sample stacks the payload position, each cable's (pitch, azimuth,
tension) triple and each robot's yaw, together with their time derivatives.
From it every robot's thrust vector, attitude (via the yaw-then-tilt Hopf
factorization), tilt angle, body rate and their rates follow algebraically.

Besides the forward maps this module provides the reverse-mode building
blocks (vector-Jacobian products) that the trajectory optimizer uses to pull
penalty gradients back onto the flat channels.  Every VJP is covered by a
finite-difference test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat

E3 = np.array([0.0, 0.0, 1.0])

#: guard below which thrust normalization is refused
THRUST_EPS = 1e-6
#: guard on z_B3 + 1 against the inverted-flight singularity
HOPF_EPS = 1e-6


class DegenerateThrust(ValueError):
    """Thrust vector too short to define a body z-axis."""


class HopfSingularity(ValueError):
    """Attitude requested within the inverted-flight singularity."""


# ---------------------------------------------------------------------------
# cable direction chain


def _dcos(u, k):
    return np.cos(u + k * np.pi / 2.0)


def _dsin(u, k):
    return np.sin(u + k * np.pi / 2.0)


def rho_partial_table(theta, phi, order=4):
    """Mixed partials d^(a+b) rho / d theta^a d phi^b for a+b <= order.

    theta, phi may be arrays of identical shape; each table entry has one
    trailing axis of size 3.  The direction is
    rho = (cos t cos p, cos t sin p, sin t).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    table = {}
    zero = np.zeros(theta.shape)
    for a in range(order + 1):
        ca = _dcos(theta, a)
        sa = _dsin(theta, a)
        for b in range(order + 1 - a):
            x = ca * _dcos(phi, b)
            y = ca * _dsin(phi, b)
            z = sa if b == 0 else zero
            table[(a, b)] = np.stack([x, y, z], axis=-1)
    return table


def rho_from_angles(theta, phi):
    """Unit cable direction; identical to model.rho_from_angles."""
    ct = np.cos(theta)
    return np.stack([ct * np.cos(phi), ct * np.sin(phi), np.sin(theta)], axis=-1)


def rho_derivatives(theta_chain, phi_chain, order=3, table=None):
    """Time derivatives of the cable direction through the given order.

    theta_chain / phi_chain hold the angle and its time derivatives, leading
    axis = derivative order (at least order+1 entries); extra batch axes are
    allowed.  Returns an array with leading axis 0..order and trailing axis 3.
    """
    if order > 3:
        raise ValueError("chain derived through order 3 only")
    th = np.asarray(theta_chain, dtype=float)
    ph = np.asarray(phi_chain, dtype=float)
    if table is None:
        table = rho_partial_table(th[0], ph[0], order=min(order + 1, 4))
    P = table
    t1 = th[1] if order >= 1 else 0.0
    p1 = ph[1] if order >= 1 else 0.0
    out = [P[(0, 0)]]
    if order >= 1:
        out.append(_ax(P[(1, 0)], t1) + _ax(P[(0, 1)], p1))
    if order >= 2:
        t2, p2 = th[2], ph[2]
        out.append(_ax(P[(2, 0)], t1 * t1) + 2 * _ax(P[(1, 1)], t1 * p1)
                   + _ax(P[(0, 2)], p1 * p1) + _ax(P[(1, 0)], t2) + _ax(P[(0, 1)], p2))
    if order >= 3:
        t2, p2, t3, p3 = th[2], ph[2], th[3], ph[3]
        out.append(_ax(P[(3, 0)], t1**3) + 3 * _ax(P[(2, 1)], t1 * t1 * p1)
                   + 3 * _ax(P[(1, 2)], t1 * p1 * p1) + _ax(P[(0, 3)], p1**3)
                   + 3 * _ax(P[(2, 0)], t1 * t2)
                   + 3 * _ax(P[(1, 1)], t2 * p1 + t1 * p2)
                   + 3 * _ax(P[(0, 2)], p1 * p2)
                   + _ax(P[(1, 0)], t3) + _ax(P[(0, 1)], p3))
    return np.stack(out, axis=0)


def _ax(tensor, scalar):
    """Multiply trailing-3 tensor by (batched) scalar."""
    return tensor * np.asarray(scalar)[..., None]


def rho_chain_vjp(theta_chain, phi_chain, gbar, table=None):
    """Pull adjoints of rho^(0..3) back to the angle chains.

    gbar: leading axis 0..3 matching rho_derivatives output (pad with zeros
    for unused orders).  Returns (theta_bar, phi_bar) with leading axis 0..3.
    """
    th = np.asarray(theta_chain, dtype=float)
    ph = np.asarray(phi_chain, dtype=float)
    if table is None:
        table = rho_partial_table(th[0], ph[0], order=4)
    P = table
    g0, g1, g2, g3 = gbar[0], gbar[1], gbar[2], gbar[3]
    t1, p1 = th[1], ph[1]
    t2, p2 = th[2], ph[2]
    t3, p3 = th[3], ph[3]

    def dot(g, tensor):
        return np.einsum("...i,...i->...", g, tensor)

    tb = np.zeros(th.shape)
    pb = np.zeros(ph.shape)
    # d rho^(k) / d theta : raise first partial index by one
    tb[0] = (dot(g0, P[(1, 0)])
             + dot(g1, _ax(P[(2, 0)], t1) + _ax(P[(1, 1)], p1))
             + dot(g2, _ax(P[(3, 0)], t1 * t1) + 2 * _ax(P[(2, 1)], t1 * p1)
                   + _ax(P[(1, 2)], p1 * p1) + _ax(P[(2, 0)], t2) + _ax(P[(1, 1)], p2))
             + dot(g3, _ax(P[(4, 0)], t1**3) + 3 * _ax(P[(3, 1)], t1 * t1 * p1)
                   + 3 * _ax(P[(2, 2)], t1 * p1 * p1) + _ax(P[(1, 3)], p1**3)
                   + 3 * _ax(P[(3, 0)], t1 * t2)
                   + 3 * _ax(P[(2, 1)], t2 * p1 + t1 * p2)
                   + 3 * _ax(P[(1, 2)], p1 * p2)
                   + _ax(P[(2, 0)], t3) + _ax(P[(1, 1)], p3)))
    pb[0] = (dot(g0, P[(0, 1)])
             + dot(g1, _ax(P[(1, 1)], t1) + _ax(P[(0, 2)], p1))
             + dot(g2, _ax(P[(2, 1)], t1 * t1) + 2 * _ax(P[(1, 2)], t1 * p1)
                   + _ax(P[(0, 3)], p1 * p1) + _ax(P[(1, 1)], t2) + _ax(P[(0, 2)], p2))
             + dot(g3, _ax(P[(3, 1)], t1**3) + 3 * _ax(P[(2, 2)], t1 * t1 * p1)
                   + 3 * _ax(P[(1, 3)], t1 * p1 * p1) + _ax(P[(0, 4)], p1**3)
                   + 3 * _ax(P[(2, 1)], t1 * t2)
                   + 3 * _ax(P[(1, 2)], t2 * p1 + t1 * p2)
                   + 3 * _ax(P[(0, 3)], p1 * p2)
                   + _ax(P[(1, 1)], t3) + _ax(P[(0, 2)], p3)))
    tb[1] = (dot(g1, P[(1, 0)])
             + dot(g2, 2 * _ax(P[(2, 0)], t1) + 2 * _ax(P[(1, 1)], p1))
             + dot(g3, 3 * _ax(P[(3, 0)], t1 * t1) + 6 * _ax(P[(2, 1)], t1 * p1)
                   + 3 * _ax(P[(1, 2)], p1 * p1) + 3 * _ax(P[(2, 0)], t2)
                   + 3 * _ax(P[(1, 1)], p2)))
    pb[1] = (dot(g1, P[(0, 1)])
             + dot(g2, 2 * _ax(P[(1, 1)], t1) + 2 * _ax(P[(0, 2)], p1))
             + dot(g3, 3 * _ax(P[(2, 1)], t1 * t1) + 6 * _ax(P[(1, 2)], t1 * p1)
                   + 3 * _ax(P[(0, 3)], p1 * p1) + 3 * _ax(P[(1, 1)], t2)
                   + 3 * _ax(P[(0, 2)], p2)))
    tb[2] = dot(g2, P[(1, 0)]) + dot(g3, 3 * _ax(P[(2, 0)], t1) + 3 * _ax(P[(1, 1)], p1))
    pb[2] = dot(g2, P[(0, 1)]) + dot(g3, 3 * _ax(P[(1, 1)], t1) + 3 * _ax(P[(0, 2)], p1))
    tb[3] = dot(g3, P[(1, 0)])
    pb[3] = dot(g3, P[(0, 1)])
    return tb, pb


# ---------------------------------------------------------------------------
# thrust vector and attitude


def thrust_vector(p_ddot, p_dddot, rho_derivs, tension, tension_rate, cfg):
    """Mass-normalized thrust vector and its time derivative.

    f = p'' + l rho'' + g e3 + F rho / m_robot
    f' = p''' + l rho''' + (F' rho + F rho') / m_robot

    Raises DegenerateThrust when |f| is too small for the attitude chain.
    """
    l, m = cfg.cable_length, cfg.robot_mass
    f = p_ddot + l * rho_derivs[2] + cfg.gravity * E3 + tension * rho_derivs[0] / m
    fdot = p_dddot + l * rho_derivs[3] + (tension_rate * rho_derivs[0]
                                          + tension * rho_derivs[1]) / m
    if np.linalg.norm(f) < THRUST_EPS:
        raise DegenerateThrust("thrust vector norm below guard")
    return f, fdot


def attitude_from_hopf(f, psi):
    """Quaternion from thrust direction and yaw, q = q_tilt ⊙ q_yaw."""
    f = np.asarray(f, dtype=float)
    norm = np.linalg.norm(f)
    if norm < THRUST_EPS:
        raise DegenerateThrust("cannot normalize thrust vector")
    z = f / norm
    if z[2] + 1.0 <= HOPF_EPS:
        raise HopfSingularity("body z-axis antiparallel to world z")
    s = np.sqrt(2.0 * (z[2] + 1.0))
    q_tilt = np.array([z[2] + 1.0, -z[1], z[0], 0.0]) / s
    return quat.mul(q_tilt, quat.from_yaw(psi))


def tilt_angle(q):
    """Angle between body z and world z from the quaternion."""
    arg = 1.0 - 2.0 * (q[1] ** 2 + q[2] ** 2)
    return float(np.arccos(np.clip(arg, -1.0, 1.0)))


def normalized_with_rate(f, fdot):
    """z = f/|f| and its time derivative (I - z z^T) f' / |f|."""
    norm = np.linalg.norm(f)
    if norm < THRUST_EPS:
        raise DegenerateThrust("cannot normalize thrust vector")
    z = f / norm
    zdot = (fdot - z * (z @ fdot)) / norm
    return z, zdot


def body_rate(z, zdot, psi, psidot):
    """Body rate from the unit thrust direction, its rate, yaw and yaw rate."""
    z = np.asarray(z, dtype=float)
    if z[2] + 1.0 <= HOPF_EPS:
        raise HopfSingularity("body z-axis antiparallel to world z")
    sp, cp = np.sin(psi), np.cos(psi)
    den = z[2] + 1.0
    w1 = zdot[0] * sp - zdot[1] * cp - zdot[2] * (z[0] * sp - z[1] * cp) / den
    w2 = zdot[0] * cp + zdot[1] * sp - zdot[2] * (z[0] * cp + z[1] * sp) / den
    w3 = (z[1] * zdot[0] - z[0] * zdot[1]) / den + psidot
    return np.array([w1, w2, w3])


@dataclass(frozen=True)
class RobotFlatState:
    """Everything the flatness maps yield for one robot at one instant."""

    f_vec: np.ndarray
    f_vec_dot: np.ndarray
    z_body: np.ndarray
    z_body_dot: np.ndarray
    q: np.ndarray
    tilt: float
    omega: np.ndarray

    @property
    def thrust(self) -> float:
        return float(np.linalg.norm(self.f_vec))


def robot_flat_state(sample, n, cfg) -> RobotFlatState:
    """Full flat state of robot n from a sample matrix.

    sample: array (orders >= 4, 4N+3) ordered (p | pitch, azimuth, tension,
    yaw per robot); rows are time-derivative orders.
    """
    S = np.asarray(sample, dtype=float)
    base = 3 + 4 * n
    th = S[:4, base]
    ph = S[:4, base + 1]
    F = S[0, base + 2]
    Fdot = S[1, base + 2]
    psi = S[0, base + 3]
    psidot = S[1, base + 3]
    rho = rho_derivatives(th, ph, order=3)
    f, fdot = thrust_vector(S[2, 0:3], S[3, 0:3], rho, F, Fdot, cfg)
    z, zdot = normalized_with_rate(f, fdot)
    q = attitude_from_hopf(f, psi)
    omega = body_rate(z, zdot, psi, psidot)
    return RobotFlatState(f, fdot, z, zdot, q, tilt_angle(q), omega)


def angular_accel(eval_sample, n, cfg, t, h=1e-3, domain=None):
    """Desired angular acceleration by central differencing of the body rate.

    eval_sample(t) must return a sample matrix accepted by robot_flat_state.
    Falls back to a one-sided difference at the domain boundary.
    """
    lo, hi = domain if domain is not None else (t - h, t + h)
    ta, tb = max(lo, t - h), min(hi, t + h)
    if tb - ta < 1e-12:
        return np.zeros(3)
    wa = robot_flat_state(eval_sample(ta), n, cfg).omega
    wb = robot_flat_state(eval_sample(tb), n, cfg).omega
    return (wb - wa) / (tb - ta)
