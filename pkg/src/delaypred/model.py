"""Core data types for single-input linear plants with input delays.

Two equivalent representations of the same dynamics are provided: the
delayed form, where the state update reads the oldest entry of an input
FIFO, and the extended form, where the state is augmented with the r
in-flight inputs and the whole system becomes delay-free.  The predictor
map forecasts the state i steps ahead from the extended state under the
nominal (disturbance-free) dynamics; the r-step forecast is what delay
compensation feeds to the nominal gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """A stabilizer certificate failed numerical validation."""


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    return M


def _as_vector(v, n: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {v.shape}")
    return v


@dataclass(frozen=True)
class LinearPlant:
    """Uncertain single-input plant x(t+1) = A x + B u(t-r) + d(t) G x, |d| <= a.

    The perturbation d G x vanishes at the origin, so the origin stays an
    equilibrium for every admissible disturbance sequence.  Matrix powers
    A^i (i <= r) and the columns A^i B are precomputed once because the
    predictor map and all redesign coefficients reuse them heavily.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    a: float
    r: int
    apow: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        G = _as_matrix(self.G, "G")
        if G.shape != A.shape:
            raise ValueError(f"G must match A's shape {A.shape}, got {G.shape}")
        B = _as_vector(self.B, A.shape[0], "B")
        if not (self.a >= 0.0):
            raise ValueError(f"uncertainty bound a must be >= 0, got {self.a}")
        if not (isinstance(self.r, (int, np.integer)) and self.r >= 0):
            raise ValueError(f"delay r must be a non-negative integer, got {self.r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "r", int(self.r))
        # cache A^0 .. A^(r+1); one extra power for next-step coefficient reuse
        powers = [np.eye(A.shape[0])]
        for _ in range(self.r + 1):
            powers.append(powers[-1] @ A)
        object.__setattr__(self, "apow", tuple(p.copy() for p in powers))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def predictor_rows(self) -> list[np.ndarray]:
        """Linear maps z -> F_i(z) as n x (n+r) matrices, i = 0..r.

        F_i(z) = A^i x + sum_{j=1..i} A^(i-j) B y_j, so row block i is
        [A^i | A^(i-1)B ... B | 0 ...].
        """
        n, r = self.n, self.r
        rows = []
        for i in range(r + 1):
            T = np.zeros((n, n + r))
            T[:, :n] = self.apow[i]
            for j in range(1, i + 1):
                T[:, n + j - 1] = self.apow[i - j] @ self.B
            rows.append(T)
        return rows


@dataclass(frozen=True)
class NominalStabilizer:
    """Nominal gain u = k'x with quadratic certificate x'Px contracting at rate lambda.

    The contraction claim (A+Bk')'P(A+Bk') <= lambda P is plant-dependent and
    is checked by :func:`validate_stabilizer`; construction only validates P
    itself (symmetric within 1e-12 relative, strictly positive definite) and
    lambda in [0, 1).
    """

    k: np.ndarray
    P: np.ndarray
    lam: float

    def __post_init__(self):
        P = _as_matrix(self.P, "P")
        k = _as_vector(self.k, P.shape[0], "k")
        scale = float(np.max(np.abs(P))) or 1.0
        if np.max(np.abs(P - P.T)) > 1e-12 * scale:
            raise ValidationError("P is not symmetric within 1e-12 relative tolerance")
        evals = np.linalg.eigvalsh(0.5 * (P + P.T))
        # scale-free positive definiteness threshold
        if evals[0] <= 1e-12 * evals[-1]:
            raise ValidationError(
                f"P is not positive definite: smallest eigenvalue {evals[0]:.6g}"
            )
        if not (0.0 <= self.lam < 1.0):
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "P", 0.5 * (P + P.T))
        object.__setattr__(self, "lam", float(self.lam))


@dataclass(frozen=True)
class ExtendedState:
    """Plant state x together with the pipeline of r pending inputs.

    y is stored oldest-first: y[i-1] is the input issued r+1-i steps ago,
    i.e. the one that reaches the plant in i-1 more steps.  This makes the
    pipeline index match the forecast depth with no off-by-one bookkeeping.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def r(self) -> int:
        return self.y.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @staticmethod
    def from_vector(v: np.ndarray, n: int) -> "ExtendedState":
        v = np.asarray(v, dtype=float).reshape(-1)
        return ExtendedState(v[:n], v[n:])


@dataclass(frozen=True)
class ScalarExamplePlant:
    """The scalar benchmark x(t+1) = x + d x + u(t-r) with nominal gain -beta.

    beta in (0, 2) keeps the nominal closed loop x(t+1) = (1-beta) x
    contracting; beta = 1 gives the dead-beat loop used throughout the
    robustness analysis.
    """

    a: float
    r: int
    beta: float = 1.0

    def __post_init__(self):
        if not (self.a >= 0.0):
            raise ValueError(f"a must be >= 0, got {self.a}")
        if not (isinstance(self.r, (int, np.integer)) and self.r >= 0):
            raise ValueError(f"r must be a non-negative integer, got {self.r}")
        if not (0.0 < self.beta < 2.0):
            raise ValueError(f"beta must lie in (0, 2), got {self.beta}")

    def plant(self) -> LinearPlant:
        one = np.ones((1, 1))
        return LinearPlant(A=one, B=np.ones(1), G=one, a=self.a, r=self.r)

    def stabilizer(self) -> NominalStabilizer:
        lam = (1.0 - self.beta) ** 2
        return NominalStabilizer(k=np.array([-self.beta]), P=np.ones((1, 1)), lam=lam)


def step_extended(plant: LinearPlant, z: ExtendedState, u: float, d: float) -> ExtendedState:
    """One step of the extended (delay-free) form.

    The plant consumes the oldest pending input y_1, the pipeline shifts,
    and the new input u enters at the back.  For r = 0 the pipeline is empty
    and u acts immediately.
    """
    if z.x.shape != (plant.n,):
        raise ValueError(f"state dimension {z.x.shape} does not match plant n={plant.n}")
    if z.r != plant.r:
        raise ValueError(f"pipeline length {z.r} does not match plant delay r={plant.r}")
    if abs(d) > plant.a + 1e-15:
        raise ValueError(f"|d|={abs(d)} exceeds the uncertainty bound a={plant.a}")
    drive = z.y[0] if plant.r > 0 else u
    x_next = plant.A @ z.x + plant.B * drive + d * (plant.G @ z.x)
    if plant.r > 0:
        y_next = np.concatenate([z.y[1:], [u]])
    else:
        y_next = np.empty(0)
    return ExtendedState(x_next, y_next)


def step_delayed(
    plant: LinearPlant,
    x: np.ndarray,
    input_buffer,
    u_new: float,
    d: float,
) -> tuple[np.ndarray, list[float]]:
    """One step of the delayed form; the buffer holds the r past inputs oldest-first.

    Returns (x_next, buffer_next) where buffer_next drops the consumed oldest
    entry and appends u_new.  Aligns with the extended form: the buffer at
    time t equals the pipeline y(t) entry for entry.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (plant.n,):
        raise ValueError(f"state dimension {x.shape} does not match plant n={plant.n}")
    buf = [float(v) for v in input_buffer]
    if len(buf) != plant.r:
        raise ValueError(f"buffer must hold exactly r={plant.r} inputs, got {len(buf)}")
    if abs(d) > plant.a + 1e-15:
        raise ValueError(f"|d|={abs(d)} exceeds the uncertainty bound a={plant.a}")
    drive = buf[0] if plant.r > 0 else float(u_new)
    x_next = plant.A @ x + plant.B * drive + d * (plant.G @ x)
    buf_next = buf[1:] + [float(u_new)] if plant.r > 0 else []
    return x_next, buf_next


def predictor_map(plant: LinearPlant, z: ExtendedState, i: int) -> np.ndarray:
    """Forecast the state i steps ahead under the nominal dynamics.

    Closed form A^i x + sum_{j=1..i} A^(i-j) B y_j from the cached powers;
    i = 0 returns x itself.  Equals i applications of the one-step nominal
    update consuming the pipeline in order.
    """
    if not (0 <= i <= plant.r):
        raise ValueError(f"forecast depth i must lie in [0, {plant.r}], got {i}")
    v = plant.apow[i] @ z.x
    for j in range(1, i + 1):
        v = v + plant.apow[i - j] @ plant.B * z.y[j - 1]
    return v


def validate_stabilizer(plant: LinearPlant, stab: NominalStabilizer) -> float:
    """Smallest feasible contraction rate of the nominal closed loop under x'Px.

    Computes the largest generalized eigenvalue of (M'PM, P), M = A + Bk',
    by symmetric reduction with a square-root factor of P.  The pair
    (stab.P, stab.lam) is a valid certificate iff the returned value is at
    most stab.lam + 1e-10.
    """
    if stab.P.shape != plant.A.shape:
        raise ValueError(
            f"stabilizer dimension {stab.P.shape} does not match plant {plant.A.shape}"
        )
    M = plant.A + np.outer(plant.B, stab.k)
    C = M.T @ stab.P @ M
    evals, vecs = np.linalg.eigh(stab.P)
    if evals[0] <= 1e-12 * evals[-1]:
        raise ValidationError(
            f"P is not positive definite: smallest eigenvalue {evals[0]:.6g}"
        )
    # W = P^(-1/2); the pencil (C, P) reduces to the symmetric matrix W C W
    W = vecs @ np.diag(evals ** -0.5) @ vecs.T
    reduced = W @ C @ W
    lam_star = float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T))[-1])
    return max(lam_star, 0.0)


def measurement_delay_wrap(policy, r: int, states, inputs) -> float:
    """Evaluate an extended-state policy on r-step-old measurements.

    Feeds the policy x(t-r) and the inputs u(t-r), ..., u(t-1) so a law that
    stabilizes the input-delayed plant stabilizes the delay-free plant under
    measurement delay instead.  `states` are x(t-len+1..t) oldest-first and
    `inputs` are the issued inputs oldest-first.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    states = list(states)
    inputs = [float(v) for v in inputs]
    if len(states) < r + 1:
        raise ValueError(f"need at least r+1={r + 1} past states, got {len(states)}")
    if len(inputs) < r:
        raise ValueError(f"need at least r={r} past inputs, got {len(inputs)}")
    x_old = np.asarray(states[-(r + 1)], dtype=float).reshape(-1)
    recent = inputs[len(inputs) - r:] if r > 0 else []
    return float(policy(ExtendedState(x_old, np.asarray(recent))))
