"""Quaternion helpers, scalar-first convention q = (w, x, y, z).

All rotations are active: ``rotate(q, v)`` returns R(q) v where R(q) maps
body-frame vectors into the world frame.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def mul(a, b):
    """Hamilton product a ⊙ b."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def normalize(q):
    return np.asarray(q) / np.linalg.norm(q)


def rotate(q, v):
    """Rotate vector v by quaternion q (body -> world for attitude quats)."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    return mul(mul(q, qv), conj(q))[1:]


def to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def derivative(q, omega_body):
    """q̇ for body rate ω expressed in the body frame."""
    return 0.5 * mul(q, np.array([0.0, *omega_body]))


def body_rate_from_derivative(q, qdot):
    """Invert ``derivative``: ω = 2 (q⁻¹ ⊙ q̇), vector part."""
    return 2.0 * mul(conj(q), qdot)[1:]


def from_yaw(psi):
    return np.array([np.cos(psi / 2.0), 0.0, 0.0, np.sin(psi / 2.0)])


def yaw_of(q):
    """Yaw angle of the Hopf factorization q = q_tilt ⊙ q_yaw."""
    w, x, y, z = q
    # q_yaw = q_tilt⁻¹ ⊙ q; with q_tilt = (w', x', y', 0) the yaw half-angle
    # satisfies tan(psi/2) = z/w up to the tilt factor, which is recovered by
    # rotating the body x-axis into the horizontal plane.
    ex = rotate(q, np.array([1.0, 0.0, 0.0]))
    zb = rotate(q, np.array([0.0, 0.0, 1.0]))
    # Undo the minimal tilt taking e3 to zb, then read the heading of x.
    axis = np.cross(zb, np.array([0.0, 0.0, 1.0]))
    s = np.linalg.norm(axis)
    c = zb[2]
    if s < 1e-12:
        v = ex if c > 0 else -ex
    else:
        axis = axis / s
        ang = np.arctan2(s, c)
        K = np.array([
            [0, -axis[2], axis[1]],
            [axis[2], 0, -axis[0]],
            [-axis[1], axis[0], 0],
        ])
        R = np.eye(3) + np.sin(ang) * K + (1 - np.cos(ang)) * (K @ K)
        v = R @ ex
    return np.arctan2(v[1], v[0])
