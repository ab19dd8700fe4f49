"""Closed-loop trajectory engine with pluggable policies and disturbances.

Discrete-time steps never fail for finite inputs, so divergence is data:
when a state stops being finite the trajectory is truncated and flagged
rather than raising.  The greedy adversary realizes the exact one-step
worst case because the next-step energy is convex in the disturbance on an
interval, pinning its maximum to an endpoint.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .backstepping import BacksteppingCertificate, lyapunov_matrix
from .model import ExtendedState, LinearPlant, NominalStabilizer, step_extended
from .redesign import RedesignSetup, eval_L, eval_kappa


@dataclass(frozen=True)
class DisturbanceStrategy:
    """Disturbance sequence generator; the bound a is inherited from the plant.

    kinds: "zero", "constant" (value v with |v| <= a), "uniform_random"
    (i.i.d. on [-a, a] from a named 64-bit seed), "greedy_adversary"
    (one-step maximizer of the recorded energy).
    """

    kind: str
    value: float = 0.0
    seed: int = 0

    KINDS = ("zero", "constant", "uniform_random", "greedy_adversary")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; choose from {self.KINDS}")

    @staticmethod
    def zero() -> "DisturbanceStrategy":
        return DisturbanceStrategy("zero")

    @staticmethod
    def constant(v: float) -> "DisturbanceStrategy":
        return DisturbanceStrategy("constant", value=float(v))

    @staticmethod
    def uniform_random(seed: int) -> "DisturbanceStrategy":
        return DisturbanceStrategy("uniform_random", seed=int(seed))

    @staticmethod
    def greedy_adversary() -> "DisturbanceStrategy":
        return DisturbanceStrategy("greedy_adversary")


@dataclass(frozen=True)
class Trajectory:
    """Recorded closed-loop run; row t holds the state at t and the applied (u, d).

    The final row (t = T, or the truncation point) carries nan for u and d.
    vbars is None unless an energy certificate was attached to the run.
    """

    ts: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    us: np.ndarray
    ds: np.ndarray
    vbars: np.ndarray | None
    diverged: bool

    def __len__(self) -> int:
        return self.ts.shape[0]

    def state(self, t: int) -> ExtendedState:
        return ExtendedState(self.xs[t], self.ys[t])

    def to_csv(self) -> str:
        """CSV with header t,x_1..x_n,y_1..y_r,u,d,vbar; 17 significant digits.

        '.' decimal separator and '\\n' line endings regardless of locale so
        reruns are byte-identical and replayable.
        """
        n = self.xs.shape[1]
        r = self.ys.shape[1]
        cols = (["t"] + [f"x_{i + 1}" for i in range(n)]
                + [f"y_{i + 1}" for i in range(r)] + ["u", "d", "vbar"])
        out = io.StringIO()
        out.write(",".join(cols) + "\n")
        for i in range(len(self)):
            vals = [f"{int(self.ts[i])}"]
            vals += [f"{v:.17g}" for v in self.xs[i]]
            vals += [f"{v:.17g}" for v in self.ys[i]]
            vals.append(f"{self.us[i]:.17g}")
            vals.append(f"{self.ds[i]:.17g}")
            vals.append(f"{self.vbars[i]:.17g}" if self.vbars is not None else "")
            out.write(",".join(vals) + "\n")
        return out.getvalue()


def _energy_matrix(plant, stab, cert, setup):
    if setup is not None:
        return setup.Vq
    if stab is not None and cert is not None:
        return lyapunov_matrix(plant, stab, cert)
    return None


def simulate(
    plant: LinearPlant,
    policy,
    strategy: DisturbanceStrategy,
    z0: ExtendedState,
    T: int,
    stab: NominalStabilizer | None = None,
    cert: BacksteppingCertificate | None = None,
    setup: RedesignSetup | None = None,
) -> Trajectory:
    """Iterate the extended-form closed loop for T steps.

    The energy column is recorded whenever a certificate (stab + cert, or a
    redesign setup) is attached.  The greedy adversary uses the setup's
    closed form d = a sign(kappa + L u) when available and otherwise picks
    the energy-maximizing endpoint of {-a, 0, +a} directly.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    a = plant.a
    if strategy.kind == "constant" and abs(strategy.value) > a + 1e-15:
        raise ValueError(f"constant disturbance {strategy.value} exceeds the bound a={a}")
    if strategy.kind == "greedy_adversary" and setup is None and (stab is None or cert is None):
        raise ValueError("greedy adversary needs a redesign setup or (stab, cert) to rank d")
    M = _energy_matrix(plant, stab, cert, setup)
    rng = np.random.default_rng(strategy.seed) if strategy.kind == "uniform_random" else None

    def pick_d(z: ExtendedState, u: float) -> float:
        if strategy.kind == "zero":
            return 0.0
        if strategy.kind == "constant":
            return strategy.value
        if strategy.kind == "uniform_random":
            return float(rng.uniform(-a, a))
        if setup is not None:
            drive = eval_kappa(setup, z) + eval_L(setup, z.x) * u
            return a if drive >= 0.0 else -a
        best_d, best_v = 0.0, -np.inf
        for d in (-a, 0.0, a):
            nxt = step_extended(plant, z, u, d).as_vector()
            v = float(nxt @ M @ nxt)
            if v > best_v:
                best_d, best_v = d, v
        return best_d

    ts, xs, ys, us, ds, vbars = [], [], [], [], [], []
    z = z0
    diverged = False
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T + 1):
            ts.append(t)
            xs.append(z.x.copy())
            ys.append(z.y.copy())
            if M is not None:
                v = z.as_vector()
                vbars.append(float(v @ M @ v))
            if not np.all(np.isfinite(z.as_vector())):
                us.append(np.nan)
                ds.append(np.nan)
                diverged = True
                break
            if t == T:
                us.append(np.nan)
                ds.append(np.nan)
                break
            u = float(policy(z))
            d = pick_d(z, u)
            us.append(u)
            ds.append(d)
            z = step_extended(plant, z, u, d)
    return Trajectory(
        ts=np.array(ts, dtype=int),
        xs=np.array(xs),
        ys=np.array(ys).reshape(len(ts), plant.r),
        us=np.array(us),
        ds=np.array(ds),
        vbars=np.array(vbars) if M is not None else None,
        diverged=diverged,
    )


def decay_rate(traj: Trajectory) -> float:
    """Largest one-step energy ratio vbar(t+1)/vbar(t) along the run.

    Steps whose current energy is below 1e-300 are skipped; a trajectory
    recorded without an energy column is an argument error.
    """
    if traj.vbars is None:
        raise ValueError("trajectory has no energy column; attach a certificate when simulating")
    v = traj.vbars
    rate = 0.0
    seen = False
    for t in range(len(v) - 1):
        if v[t] < 1e-300:
            continue
        rate = max(rate, v[t + 1] / v[t])
        seen = True
    return rate if seen else 0.0


def adversary_endpoint_check(setup: RedesignSetup, z: ExtendedState, u: float,
                             grid: int = 1000) -> bool:
    """Confirm the worst disturbance over a d-grid sits at d = +-a.

    The next-step energy is quadratic in d with a nonnegative leading
    coefficient, so an interior grid maximum would signal a broken setup.
    """
    a = setup.plant.a
    if a == 0.0:
        return True
    M = setup.Vq
    dgrid = np.linspace(-a, a, grid)
    vals = []
    for d in dgrid:
        nxt = step_extended(setup.plant, z, u, d).as_vector()
        vals.append(float(nxt @ M @ nxt))
    vals = np.array(vals)
    endpoint = max(vals[0], vals[-1])
    return bool(np.max(vals) <= endpoint + 1e-9 * max(1.0, endpoint))
