"""Physical model of the cable-suspended transport system.

N aerial robots carry one point-mass payload through massless taut cables of
common length l.  The payload feels gravity plus the sum of cable tension
vectors; each robot feels gravity, its mass-normalized thrust along the body
z-axis, and the reaction of its own cable.  Cable directions point from the
payload to the robot.

The integrator treats the taut cables as algebraic constraints: tensions are
solved each substep so the second derivative of the cable-length constraint
vanishes (with Baumgarte damping on the residual), clamped at zero.  A cable
whose closure tension hits zero is flagged slack and simply applies no force.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quat

E3 = np.array([0.0, 0.0, 1.0])

#: Baumgarte gain base: constraint damped as C'' + 2a C' + a^2 C = 0.
BAUMGARTE_ALPHA = 10.0


@dataclass(frozen=True)
class SystemConfig:
    """Physical constants of the transport system."""

    n_robots: int = 3
    payload_mass: float = 0.2
    robot_mass: float = 0.32
    cable_length: float = 1.2
    gravity: float = 9.81
    inertia: np.ndarray = field(
        default_factory=lambda: np.diag([4.463e-4, 4.725e-4, 5.340e-4])
    )

    def __post_init__(self):
        if self.n_robots < 2:
            raise ValueError("need at least 2 robots")
        if min(self.payload_mass, self.robot_mass, self.cable_length, self.gravity) <= 0:
            raise ValueError("masses, cable length and gravity must be positive")
        J = np.asarray(self.inertia, dtype=float)
        if J.shape != (3, 3) or not np.allclose(J, J.T, atol=1e-12):
            raise ValueError("inertia must be symmetric 3x3")
        if np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", J)

    @classmethod
    def from_file(cls, path) -> "SystemConfig":
        """Load from a plain key = value text file ('#' starts a comment)."""
        kv = {}
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, val = line.partition("=")
                kv[key.strip()] = val.strip()
        kwargs = {}
        if "n_robots" in kv:
            kwargs["n_robots"] = int(kv.pop("n_robots"))
        if "inertia_diag" in kv:
            diag = [float(x) for x in kv.pop("inertia_diag").split(",")]
            kwargs["inertia"] = np.diag(diag)
        for key in ("payload_mass", "robot_mass", "cable_length", "gravity"):
            if key in kv:
                kwargs[key] = float(kv.pop(key))
        if kv:
            raise ValueError(f"unknown config keys: {sorted(kv)}")
        return cls(**kwargs)

    def to_file(self, path) -> None:
        diag = np.diag(self.inertia)
        with open(path, "w") as fh:
            fh.write(f"n_robots = {self.n_robots}\n")
            fh.write(f"payload_mass = {self.payload_mass}\n")
            fh.write(f"robot_mass = {self.robot_mass}\n")
            fh.write(f"cable_length = {self.cable_length}\n")
            fh.write(f"gravity = {self.gravity}\n")
            fh.write(f"inertia_diag = {diag[0]}, {diag[1]}, {diag[2]}\n")


@dataclass(frozen=True)
class PayloadState:
    p: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class RobotState:
    p: np.ndarray
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.q) - 1.0) > 1e-9:
            raise ValueError("quaternion must be unit norm")


@dataclass(frozen=True)
class CableState:
    pitch: float
    azimuth: float
    tension: float

    @property
    def rho(self) -> np.ndarray:
        return rho_from_angles(self.pitch, self.azimuth)


@dataclass(frozen=True)
class ControlInput:
    thrust: float               # mass-normalized, m/s^2
    torque: np.ndarray          # body frame, N m

    def __post_init__(self):
        if self.thrust < 0:
            raise ValueError("thrust must be nonnegative")


@dataclass(frozen=True)
class WorldState:
    """Whole simulation state; arrays are copied on construction."""

    t: float
    payload_p: np.ndarray       # (3,)
    payload_v: np.ndarray       # (3,)
    robot_p: np.ndarray         # (N, 3)
    robot_v: np.ndarray         # (N, 3)
    robot_q: np.ndarray         # (N, 4)
    robot_w: np.ndarray         # (N, 3)
    tensions: np.ndarray        # (N,) closure tensions at this state
    slack: np.ndarray           # (N,) bool

    @property
    def n_robots(self) -> int:
        return self.robot_p.shape[0]

    def cable_states(self) -> list[CableState]:
        out = []
        for n in range(self.n_robots):
            r = self.robot_p[n] - self.payload_p
            u = r / np.linalg.norm(r)
            out.append(CableState(float(np.arcsin(np.clip(u[2], -1, 1))),
                                  float(np.arctan2(u[1], u[0])),
                                  float(self.tensions[n])))
        return out


def rho_from_angles(pitch, azimuth):
    """Unit cable direction from pitch (above horizontal) and azimuth."""
    ct = np.cos(pitch)
    return np.array([ct * np.cos(azimuth), ct * np.sin(azimuth), np.sin(pitch)])


def robot_position(payload_p, rho, cable_length):
    """Robot position implied by payload position and cable direction."""
    return np.asarray(payload_p) + cable_length * np.asarray(rho)


def payload_accel(cables, cfg: SystemConfig):
    """Payload acceleration under gravity and the given cable tensions."""
    acc = -cfg.gravity * E3.copy()
    for c in cables:
        acc = acc + c.tension * c.rho / cfg.payload_mass
    return acc


def robot_accel(state: RobotState, u: ControlInput, cable: CableState, cfg: SystemConfig):
    """Robot acceleration: gravity + thrust along body z - cable reaction."""
    zb = quat.rotate(state.q, E3)
    return -cfg.gravity * E3 + u.thrust * zb - cable.tension * cable.rho / cfg.robot_mass


def cable_closure_tensions(payload_p, payload_v, robot_p, robot_v, thrust_vec, cfg,
                           alpha=BAUMGARTE_ALPHA):
    """Tensions enforcing fixed cable lengths, clamped at zero.

    Solves the linear system obtained by setting the Baumgarte-damped second
    derivative of (|p_n - p|^2 - l^2)/2 to zero for all cables.  Cables whose
    solution would be negative are removed (slack) and the rest re-solved.

    thrust_vec is the mass-normalized thrust vector f_n * R_n e3 per robot.
    Returns (tensions (N,), slack (N,) bool).
    """
    N = robot_p.shape[0]
    r = robot_p - payload_p[None, :]
    dist = np.linalg.norm(r, axis=1)
    u = r / dist[:, None]
    rv = robot_v - payload_v[None, :]

    C = 0.5 * (dist**2 - cfg.cable_length**2)
    Cdot = np.einsum("ni,ni->n", r, rv)
    # A F = b with rows from r_n . (a_n - a) + |v_n - v|^2 = -2a C' - a^2 C
    A = (r @ u.T) / cfg.payload_mass
    A[np.arange(N), np.arange(N)] += dist / cfg.robot_mass
    b = (np.einsum("ni,ni->n", r, thrust_vec)
         + np.einsum("ni,ni->n", rv, rv)
         + 2.0 * alpha * Cdot + alpha**2 * C)

    active = np.ones(N, dtype=bool)
    F = np.zeros(N)
    for _ in range(N):
        idx = np.flatnonzero(active)
        F[:] = 0.0
        F[idx] = np.linalg.solve(A[np.ix_(idx, idx)], b[idx])
        neg = F < -1e-12
        if not neg.any():
            break
        active &= ~neg
        if not active.any():
            F[:] = 0.0
            break
    F = np.maximum(F, 0.0)
    slack = F <= 0.0
    return F, slack


def _derivatives(payload_p, payload_v, robot_p, robot_v, robot_q, robot_w,
                 thrust, torque, cfg, alpha=BAUMGARTE_ALPHA):
    """Time derivatives of all states plus closure tensions."""
    N = robot_p.shape[0]
    zb = np.empty((N, 3))
    for n in range(N):
        zb[n] = quat.rotate(robot_q[n], E3)
    fvec = thrust[:, None] * zb
    F, slack = cable_closure_tensions(payload_p, payload_v, robot_p, robot_v,
                                      fvec, cfg, alpha)
    r = robot_p - payload_p[None, :]
    u = r / np.linalg.norm(r, axis=1)[:, None]

    a_payload = -cfg.gravity * E3 + (F[:, None] * u).sum(axis=0) / cfg.payload_mass
    a_robot = -cfg.gravity * E3 + fvec - (F / cfg.robot_mass)[:, None] * u

    qdot = np.empty((N, 4))
    wdot = np.empty((N, 3))
    Jinv = np.linalg.inv(cfg.inertia)
    for n in range(N):
        qdot[n] = quat.derivative(robot_q[n], robot_w[n])
        wdot[n] = Jinv @ (torque[n] - np.cross(robot_w[n], cfg.inertia @ robot_w[n]))
    return payload_v, a_payload, robot_v, a_robot, qdot, wdot, F, slack


def step_world(world: WorldState, inputs, dt: float, cfg: SystemConfig,
               alpha=BAUMGARTE_ALPHA) -> WorldState:
    """Advance one classical RK4 step of at most 10 ms.

    inputs: sequence of ControlInput, one per robot, held constant over dt.
    Tensions are re-solved at every RK4 stage; the returned state carries the
    closure tensions and slack flags evaluated at the new state.
    """
    if not 0.0 < dt <= 0.01:
        raise ValueError("dt must be in (0, 0.01]")
    N = world.n_robots
    thrust = np.array([u.thrust for u in inputs], dtype=float)
    torque = np.array([np.asarray(u.torque, dtype=float) for u in inputs])
    if thrust.shape != (N,):
        raise ValueError("need one input per robot")

    def f(pp, pv, rp, rv, rq, rw):
        d = _derivatives(pp, pv, rp, rv, rq, rw, thrust, torque, cfg, alpha)
        return d[:6]

    y = (world.payload_p, world.payload_v, world.robot_p, world.robot_v,
         world.robot_q, world.robot_w)
    k1 = f(*y)
    k2 = f(*(yi + 0.5 * dt * ki for yi, ki in zip(y, k1)))
    k3 = f(*(yi + 0.5 * dt * ki for yi, ki in zip(y, k2)))
    k4 = f(*(yi + dt * ki for yi, ki in zip(y, k3)))
    out = [yi + dt / 6.0 * (a + 2 * b + 2 * c + d)
           for yi, a, b, c, d in zip(y, k1, k2, k3, k4)]

    rq = out[4] / np.linalg.norm(out[4], axis=1)[:, None]
    F, slack = cable_closure_tensions(
        out[0], out[1], out[2], out[3],
        thrust[:, None] * np.array([quat.rotate(q, E3) for q in rq]), cfg, alpha)
    return WorldState(world.t + dt, out[0], out[1], out[2], out[3],
                      rq, out[5], F, slack)


def hover_world(cfg: SystemConfig, payload_p, pitch, azimuths=None) -> tuple:
    """Static pyramid equilibrium and the inputs that hold it.

    Returns (WorldState, [ControlInput]) with every robot hovering at the
    given cable pitch, azimuths defaulting to an even spread.
    """
    N = cfg.n_robots
    payload_p = np.asarray(payload_p, dtype=float)
    if azimuths is None:
        azimuths = 2.0 * np.pi * np.arange(N) / N
    F = cfg.payload_mass * cfg.gravity / (N * np.sin(pitch))
    robot_p = np.empty((N, 3))
    robot_q = np.empty((N, 4))
    inputs = []
    tensions = np.full(N, F)
    from . import flatness  # deferred: flatness imports model types

    for n in range(N):
        rho = rho_from_angles(pitch, azimuths[n])
        robot_p[n] = payload_p + cfg.cable_length * rho
        fvec = cfg.gravity * E3 + F * rho / cfg.robot_mass
        robot_q[n] = flatness.attitude_from_hopf(fvec, 0.0)
        inputs.append(ControlInput(float(np.linalg.norm(fvec)), np.zeros(3)))
    world = WorldState(0.0, payload_p, np.zeros(3), robot_p, np.zeros((N, 3)),
                       robot_q, np.zeros((N, 3)), tensions, np.zeros(N, bool))
    return world, inputs
