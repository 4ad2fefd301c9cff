"""Minimum-control-effort piecewise polynomial trajectories.

A trajectory over D = 4N+3 flat channels is M pieces of degree 2s-1 in the
natural basis [1, t, ..., t^(2s-1)] with per-piece durations T_m.  Given the
junction values w (one D-vector per interior junction) and boundary samples
(value..(s-1)-th derivative at both ends), the unique piecewise polynomial
minimizing the integral of the squared s-th derivative interpolates w with
continuity through order 2s-2 at every junction.  Those conditions form a
banded linear system solved once per (T, boundary) and reused: the same LU
factorization also backpropagates cost gradients from the dense coefficients
to the sparse parameters in linear time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu


class SingularSystem(ValueError):
    """Raised when the interpolation system cannot be assembled/solved."""


class OutOfDomain(ValueError):
    """Evaluation time outside [0, total duration]."""


def n_channels(n_robots: int) -> int:
    return 4 * n_robots + 3


def falling(i, d):
    """Falling factorial i(i-1)...(i-d+1)."""
    out = 1.0
    for k in range(d):
        out *= i - k
    return out


def basis(t, s, order=0):
    """beta^(order)(t) for the natural polynomial basis of degree 2s-1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (2 * s,))
    for i in range(order, 2 * s):
        out[..., i] = falling(i, order) * t ** (i - order)
    return out


@dataclass
class Trajectory:
    """Piecewise polynomial over the flat channels.

    coeffs has shape (M, 2s, D): coeffs[m, i, ch] multiplies t^i on piece m
    with t measured from the piece start.  Instances are immutable by
    convention; build() attaches the solver workspace used by backprop.
    """

    s: int
    n_robots: int
    durations: np.ndarray          # (M,)
    coeffs: np.ndarray             # (M, 2s, D)

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if np.any(self.durations <= 0):
            raise SingularSystem("piece durations must be positive")
        self._starts = np.concatenate([[0.0], np.cumsum(self.durations)])
        self._ws = None

    @property
    def n_pieces(self) -> int:
        return len(self.durations)

    @property
    def total_duration(self) -> float:
        return float(self._starts[-1])

    @property
    def n_channels(self) -> int:
        return self.coeffs.shape[2]

    def piece_index(self, t: float) -> int:
        if not 0.0 <= t <= self.total_duration + 1e-12:
            raise OutOfDomain(f"t={t} outside [0, {self.total_duration}]")
        m = int(np.searchsorted(self._starts, t, side="right")) - 1
        return min(max(m, 0), self.n_pieces - 1)

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        """Evaluate all channels at time t (right-continuous at junctions)."""
        if order > 2 * self.s - 1:
            return np.zeros(self.n_channels)
        m = self.piece_index(t)
        b = basis(t - self._starts[m], self.s, order)
        return b @ self.coeffs[m]

    def sample(self, t: float, orders: int) -> np.ndarray:
        """Stack of derivatives 0..orders-1 at t, shape (orders, D)."""
        return np.stack([self.eval(t, d) for d in range(orders)], axis=0)

    def grid(self, kappa: int, orders: int):
        """Uniform per-piece sampling used by the quadrature transcription.

        Returns (S, B, tau) with S[m, k] the (orders, D) derivative stack at
        t_k = k T_m / kappa on piece m, B[m, k, d] = beta^(d)(t_k), and tau
        the per-piece sample times.
        """
        M, s, D = self.n_pieces, self.s, self.n_channels
        frac = np.arange(kappa + 1) / kappa
        tau = self.durations[:, None] * frac[None, :]            # (M, kappa+1)
        B = np.zeros((M, kappa + 1, orders, 2 * s))
        for d in range(orders):
            if d > 2 * s - 1:
                continue
            for i in range(d, 2 * s):
                B[:, :, d, i] = falling(i, d) * tau ** (i - d)
        S = np.einsum("mkdi,mic->mkdc", B, self.coeffs)
        return S, B, tau

    def dense_times(self, per_piece: int) -> np.ndarray:
        """Global times of a per_piece-per-segment uniform resampling."""
        out = []
        for m in range(self.n_pieces):
            out.append(self._starts[m]
                       + self.durations[m] * np.arange(per_piece) / per_piece)
        out.append([self.total_duration])
        return np.concatenate(out)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        M, two_s, D = self.coeffs.shape
        doc = {
            "s": self.s,
            "n_robots": self.n_robots,
            "pieces": M,
            "durations": self.durations.tolist(),
            "coefficients": self.coeffs.reshape(M * two_s, D).tolist(),
            "channels": channel_layout(self.n_robots),
        }
        return json.dumps(doc)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        doc = json.loads(text)
        s, M = doc["s"], doc["pieces"]
        coeffs = np.asarray(doc["coefficients"], dtype=float).reshape(M, 2 * s, -1)
        return cls(s, doc["n_robots"], np.asarray(doc["durations"]), coeffs)

    @classmethod
    def load(cls, path) -> "Trajectory":
        with open(path) as fh:
            return cls.from_json(fh.read())


def channel_layout(n_robots: int) -> list[str]:
    names = ["px", "py", "pz"]
    for n in range(n_robots):
        names += [f"pitch{n}", f"azimuth{n}", f"tension{n}", f"yaw{n}"]
    return names


def _assemble(durations, s):
    """Sparse condition matrix plus row metadata for the adjoint pass.

    Row order: s start-boundary rows; per interior junction j: end-value row
    of piece j-1, derivative-continuity rows (orders 1..2s-2), start-value
    row of piece j; s end-boundary rows.  Metadata per row: the piece whose
    end time enters the row (-1 if none), the derivative order evaluated
    there, and which junction's value sits on the right-hand side (-1 if a
    boundary row).
    """
    T = np.asarray(durations, dtype=float)
    if np.any(T <= 0) or not np.all(np.isfinite(T)):
        raise SingularSystem("piece durations must be positive and finite")
    M = len(T)
    n = 2 * s * M
    rows, cols, vals = [], [], []
    row_piece = np.full(n, -1, dtype=int)
    row_order = np.zeros(n, dtype=int)
    row_w = np.full(n, -1, dtype=int)

    def put(r, piece, coefs):
        for i, v in enumerate(coefs):
            if v != 0.0:
                rows.append(r)
                cols.append(2 * s * piece + i)
                vals.append(v)

    r = 0
    for d in range(s):
        put(r, 0, basis(0.0, s, d))
        r += 1
    for j in range(1, M):
        bT = [basis(T[j - 1], s, d) for d in range(2 * s)]
        put(r, j - 1, bT[0])
        row_piece[r], row_order[r], row_w[r] = j - 1, 0, j - 1
        r += 1
        for d in range(1, 2 * s - 1):
            put(r, j - 1, bT[d])
            put(r, j, -basis(0.0, s, d))
            row_piece[r], row_order[r] = j - 1, d
            r += 1
        put(r, j, basis(0.0, s, 0))
        row_w[r] = j - 1
        r += 1
    for d in range(s):
        put(r, M - 1, basis(T[M - 1], s, d))
        row_piece[r], row_order[r] = M - 1, d
        r += 1

    A = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    return A, row_piece, row_order, row_w


def build(junctions, durations, boundary_start, boundary_end, s=4,
          n_robots=None) -> Trajectory:
    """Solve the interpolation system and return the trajectory.

    junctions: (M-1, D) interior junction values (may be empty for M=1).
    boundary_start / boundary_end: (s, D) derivative stacks at both ends.
    """
    T = np.asarray(durations, dtype=float)
    M = len(T)
    b0 = np.asarray(boundary_start, dtype=float)
    b1 = np.asarray(boundary_end, dtype=float)
    D = b0.shape[1]
    w = np.asarray(junctions, dtype=float).reshape(max(M - 1, 0), D)
    if b0.shape != (s, D) or b1.shape != (s, D):
        raise SingularSystem("boundary stacks must be (s, D)")
    if n_robots is None:
        n_robots = (D - 3) // 4

    A, row_piece, row_order, row_w = _assemble(T, s)
    try:
        lu = splu(A)
    except RuntimeError as exc:   # pragma: no cover - SuperLU failure
        raise SingularSystem(str(exc)) from exc

    rhs = np.zeros((2 * s * M, D))
    rhs[:s] = b0
    rhs[-s:] = b1
    mask = row_w >= 0
    rhs[mask] = w[row_w[mask]]

    c = lu.solve(rhs)
    traj = Trajectory(s, n_robots, T, c.reshape(M, 2 * s, D))
    traj._ws = (lu, row_piece, row_order, row_w)
    return traj


def backprop(traj: Trajectory, grad_c, grad_T):
    """Pull (dJ/dc, dJ/dT) back to (dJ/dw, dJ/dT) through the linear solve.

    grad_c: (M, 2s, D) or (2sM, D); grad_T: (M,) direct temporal gradient
    (energy + quadrature terms).  Reuses the LU factorization from build.
    """
    if traj._ws is None:
        raise ValueError("trajectory was not produced by build()")
    lu, row_piece, row_order, row_w = traj._ws
    M, two_s, D = traj.coeffs.shape
    g = np.asarray(grad_c, dtype=float).reshape(M * two_s, D)
    lam = lu.solve(g, trans="T")

    grad_w = np.zeros((max(M - 1, 0), D))
    mask = row_w >= 0
    np.add.at(grad_w, row_w[mask], lam[mask])

    grad_T_out = np.asarray(grad_T, dtype=float).copy()
    rows = np.flatnonzero(row_piece >= 0)
    for r in rows:
        m, d = row_piece[r], row_order[r]
        znext = basis(traj.durations[m], traj.s, d + 1) @ traj.coeffs[m]
        grad_T_out[m] -= lam[r] @ znext
    return grad_w, grad_T_out


def gram_matrix(T, s):
    """Closed-form integral of beta^(s) beta^(s)^T over [0, T]."""
    G = np.zeros((2 * s, 2 * s))
    for i in range(s, 2 * s):
        for j in range(s, 2 * s):
            k = i + j - 2 * s + 1
            G[i, j] = falling(i, s) * falling(j, s) * T**k / k
    return G


def channel_weights(n_robots, lam_Z):
    """Per-channel energy weights: payload 1, cable and yaw channels lam_Z."""
    wts = np.full(n_channels(n_robots), lam_Z)
    wts[:3] = 1.0
    return wts


def energy_cost(traj: Trajectory, lam_Z, lam_T):
    """Control-effort + time cost with analytic gradients.

    J = sum_ch wt_ch * integral of (Z_ch^(s))^2 + lam_T * total duration;
    returns (J, dJ/dc (M,2s,D), dJ/dT (M,)).
    """
    M, two_s, D = traj.coeffs.shape
    s = traj.s
    wts = channel_weights(traj.n_robots, lam_Z)
    J = lam_T * traj.total_duration
    grad_c = np.zeros_like(traj.coeffs)
    grad_T = np.full(M, lam_T)
    for m in range(M):
        G = gram_matrix(traj.durations[m], s)
        cw = traj.coeffs[m] * wts[None, :]
        J += float(np.einsum("ic,ij,jc->", cw, G, traj.coeffs[m]))
        grad_c[m] = 2.0 * (G @ traj.coeffs[m]) * wts[None, :]
        zs = basis(traj.durations[m], s, s) @ traj.coeffs[m]
        grad_T[m] += float((wts * zs**2).sum())
    return J, grad_c, grad_T
