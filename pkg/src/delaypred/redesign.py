"""Minimax redesign of the predictor feedback against multiplicative uncertainty.

The worst-case next-step value of the composite energy is an exact closed
form: quadratic in the input u, with the disturbance contributing a term
2a|kappa + L u| because the maximum over d in [-a, a] always sits at an
endpoint.  Minimizing over u yields a continuous piecewise-linear feedback,
homogeneous of degree 1, with three regions keyed on p*kappa - b*L versus
a*L^2.  Certification evaluates the three per-region inequalities on the
unit sphere (degree-2 homogeneity makes that sufficient, up to sampling)
and a pass means every admissible disturbance keeps the energy contracting
at rate sigma.

The scalar helpers reproduce the benchmark's own piecewise law and its
circle-parametrized certification inequalities verbatim; that law differs
from (and is dominated by) the general minimax law, so the two paths are
deliberately not interchangeable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .backstepping import BacksteppingCertificate, gauge_rows, lyapunov_matrix
from .golden import golden_section_max
from .model import ExtendedState, LinearPlant, NominalStabilizer

MARGIN_FLOOR = 1e-9
SINGULAR_L = 1e-12
SPHERE_SEED = 0x5EED
SIGMA_GRID_POINTS = 100


class ConfigurationError(ValueError):
    """The redesign parameters cannot produce a certificate."""


@dataclass(frozen=True)
class RedesignSetup:
    """Plant + stabilizer + weights with every coefficient map precomputed.

    The cached pieces are the input-channel weight p, the disturbance-gain
    row L, the linear form b, the quadratic form of the cross term kappa,
    and the quadratic forms making up the residual; all are assembled once
    from the plant's cached matrix powers.
    """

    plant: LinearPlant
    stab: NominalStabilizer
    cert: BacksteppingCertificate
    p: float = field(init=False, repr=False, compare=False)
    ell: np.ndarray = field(init=False, repr=False, compare=False)
    beta: np.ndarray = field(init=False, repr=False, compare=False)
    Kq: np.ndarray = field(init=False, repr=False, compare=False)
    Rbase: np.ndarray = field(init=False, repr=False, compare=False)
    Ra: np.ndarray = field(init=False, repr=False, compare=False)
    Vq: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        plant, stab, cert = self.plant, self.stab, self.cert
        if plant.r < 1:
            raise ValueError("redesign needs r >= 1")
        if stab.P.shape != plant.A.shape:
            raise ValueError("stabilizer dimension does not match plant")
        n, r, c, phi = plant.n, plant.r, cert.c, cert.phi
        A, B, G, P, k = plant.A, plant.B, plant.G, stab.P, stab.k
        rows = plant.predictor_rows()
        gauges = gauge_rows(plant, stab)
        cross = B @ P @ A - phi * k          # row vector B'PA - phi k'
        M = A.T @ P @ A + phi * np.outer(k, k)

        p = (c ** r) * float(B @ P @ B + phi)
        if not p > 0.0:
            raise ConfigurationError(
                f"input-channel weight p = c^r (B'PB + phi) = {p:.6g} must be positive"
            )

        Tx = np.zeros((n, n + r))
        Tx[:, :n] = np.eye(n)
        GT = G @ Tx                          # z -> Gx

        ell = np.zeros(n + r)
        ell[:n] = (c ** r) * (cross @ plant.apow[r - 1] @ G)
        beta = (c ** r) * (cross @ rows[r])

        K = rows[1].T @ P @ GT               # (Ax + B y1)' P Gx
        for i in range(1, r):
            e = np.zeros(n + r)
            e[n + i] = 1.0                   # selects y_{i+1}
            row_i = (c ** i) * ((cross @ plant.apow[i - 1] @ G) @ Tx)
            K += np.outer(e, row_i)
        for i in range(1, r + 1):
            K += (c ** i) * rows[i].T @ M @ (plant.apow[i - 1] @ G @ Tx)
        Kq = 0.5 * (K + K.T)

        Rbase = np.zeros((n + r, n + r))
        for i in range(1, r + 1):
            Rbase += (c ** (i - 1)) * rows[i].T @ P @ rows[i]
        Rbase += (c ** r) * rows[r].T @ M @ rows[r]
        for i in range(2, r + 1):
            Rbase += phi * (c ** (i - 1)) * np.outer(gauges[i - 1], gauges[i - 1])

        Ra_x = np.zeros((n, n))
        for i in range(0, r + 1):
            AiG = plant.apow[i] @ G
            Ra_x += (c ** i) * AiG.T @ P @ AiG
        for i in range(1, r + 1):
            row_kg = k @ plant.apow[i - 1] @ G
            Ra_x += phi * (c ** i) * np.outer(row_kg, row_kg)
        Ra = np.zeros((n + r, n + r))
        Ra[:n, :n] = Ra_x

        Vq = lyapunov_matrix(plant, stab, cert)

        for name, val in (
            ("p", p), ("ell", ell), ("beta", np.asarray(beta)), ("Kq", Kq),
            ("Rbase", 0.5 * (Rbase + Rbase.T)), ("Ra", Ra), ("Vq", Vq),
        ):
            object.__setattr__(self, name, val)

    def vbar(self, z: ExtendedState) -> float:
        v = z.as_vector()
        return float(v @ self.Vq @ v)


def eval_L(setup: RedesignSetup, x: np.ndarray) -> float:
    """Gain of the input on the disturbance cross term; linear in x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (setup.plant.n,):
        raise ValueError(f"x must have length {setup.plant.n}, got {x.shape}")
    return float(setup.ell[: setup.plant.n] @ x)


def eval_kappa(setup: RedesignSetup, z: ExtendedState) -> float:
    """Input-free part of the disturbance cross term; quadratic in z."""
    v = z.as_vector()
    return float(v @ setup.Kq @ v)


def eval_b(setup: RedesignSetup, z: ExtendedState) -> float:
    """Linear coefficient of the input in the worst-case value."""
    return float(setup.beta @ z.as_vector())


def eval_resid(setup: RedesignSetup, z: ExtendedState, a: float, sigma=None) -> float:
    """Input- and disturbance-sign-free remainder of the worst-case value.

    Quadratic in z, affine in a^2 and in sigma (it carries the -sigma*Vbar
    bookkeeping term so the certification inequalities are pure <= 0 checks).
    """
    if sigma is None:
        sigma = setup.cert.sigma
    v = z.as_vector()
    return float(v @ setup.Rbase @ v + a * a * (v @ setup.Ra @ v) - sigma * (v @ setup.Vq @ v))


def worst_case_value(setup: RedesignSetup, z: ExtendedState, u: float, a: float) -> float:
    """max over |d| <= a of the next-step composite energy, in closed form.

    Equals p u^2 + 2 b u + 2a|kappa + L u| + resid + sigma Vbar; the maximum
    over d always sits at d = +-a because the d^2 coefficient is nonnegative.
    """
    if a < 0.0:
        raise ValueError(f"a must be >= 0, got {a}")
    kap = eval_kappa(setup, z)
    L = eval_L(setup, z.x)
    b = eval_b(setup, z)
    return (
        setup.p * u * u
        + 2.0 * b * u
        + 2.0 * a * abs(kap + L * u)
        + eval_resid(setup, z, a)
        + setup.cert.sigma * setup.vbar(z)
    )


def redesigned_feedback(setup: RedesignSetup, z: ExtendedState, a: float) -> float:
    """Minimizer of the worst-case next-step energy; continuous, PWL, degree 1.

    Three branches keyed on t = p*kappa - b*L against a*L^2; when L = 0 the
    middle branch's region is empty and both outer branches coincide at -b/p.
    """
    p = setup.p
    L = eval_L(setup, z.x)
    kap = eval_kappa(setup, z)
    b = eval_b(setup, z)
    t = p * kap - b * L
    if abs(t) < a * L * L and L != 0.0:
        return -kap / L
    if t >= 0.0:
        return -(a * L + b) / p
    return (a * L - b) / p


@dataclass(frozen=True)
class CertificationReport:
    """Worst per-region certification values on the sampled unit sphere.

    passed requires every region's worst value <= -1e-9 (margin floor);
    margin is the negated overall worst.  Certification is sampling-based
    ("certified up to sampling"), not an exact algebraic certificate.
    """

    a: float
    sigma: float
    region1: float
    region2: float
    region3: float
    margin: float
    samples: int
    passed: bool
    largest_certified_a: float | None = None
    worst_points: tuple = (None, None, None)

    def to_text(self) -> str:
        def fmt(v):
            return "none" if v == -math.inf else f"{v:.9g}"

        lines = [
            f"pass={'true' if self.passed else 'false'}",
            f"a={self.a:.6f}",
            f"sigma={self.sigma:.6f}",
            f"margin={self.margin:.9g}",
            f"samples={self.samples}",
            f"region1_worst={fmt(self.region1)}",
            f"region2_worst={fmt(self.region2)}",
            f"region3_worst={fmt(self.region3)}",
        ]
        if self.largest_certified_a is not None:
            lines.append(f"largest_certified_a={self.largest_certified_a:.6f}")
        return "\n".join(lines)


def sphere_samples(dim: int, n_random: int = 10_000, seed: int = SPHERE_SEED) -> np.ndarray:
    """Deterministic unit-sphere sample set: Sobol + seeded Gaussian + axes/diagonals."""
    blocks = []
    sob = qmc.Sobol(d=dim, scramble=False).random_base2(m=12)
    g = norm.ppf(np.clip(sob, 1e-12, 1.0 - 1e-12))
    blocks.append(g)
    rng = np.random.default_rng(seed)
    blocks.append(rng.standard_normal(size=(n_random, dim)))
    eye = np.eye(dim)
    blocks.append(eye)
    blocks.append(-eye)
    diag = []
    for i in range(dim):
        for j in range(i + 1, dim):
            diag.append(eye[i] + eye[j])
            diag.append(eye[i] - eye[j])
    if diag:
        blocks.append(np.array(diag))
    Z = np.vstack(blocks)
    norms = np.linalg.norm(Z, axis=1)
    Z = Z[norms > 1e-9]
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def _sample_coeffs(setup: RedesignSetup, Z: np.ndarray) -> dict:
    kv = np.einsum("ij,jk,ik->i", Z, setup.Kq, Z)
    bv = Z @ setup.beta
    Lv = Z @ setup.ell
    rbase = np.einsum("ij,jk,ik->i", Z, setup.Rbase, Z)
    ra = np.einsum("ij,jk,ik->i", Z, setup.Ra, Z)
    vb = np.einsum("ij,jk,ik->i", Z, setup.Vq, Z)
    return {"kv": kv, "bv": bv, "Lv": Lv, "rbase": rbase, "ra": ra, "vb": vb}


def _region_worsts(setup: RedesignSetup, co: dict, a: float, sigma: float):
    p = setup.p
    kv, bv, Lv = co["kv"], co["bv"], co["Lv"]
    resid = co["rbase"] + a * a * co["ra"] - sigma * co["vb"]
    t = p * kv - bv * Lv
    aL2 = a * Lv * Lv
    mid_strict = np.abs(t) < aL2
    l_ok = np.abs(Lv) >= SINGULAR_L
    mid = mid_strict & l_ok
    # degenerate L: the middle region is empty; route by the sign of kappa
    r2 = (~mid_strict & (t >= 0.0)) | (mid_strict & ~l_ok & (kv >= 0.0))
    r3 = ~(mid | r2)

    worsts = []
    args = []
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs_mid = p * (kv / Lv) ** 2 - 2.0 * bv * kv / Lv + resid
    lhs_r2 = -((a * Lv + bv) ** 2) / p + resid + 2.0 * a * kv
    lhs_r3 = -((a * Lv - bv) ** 2) / p + resid - 2.0 * a * kv
    for mask, lhs in ((mid, lhs_mid), (r2, lhs_r2), (r3, lhs_r3)):
        if np.any(mask):
            idx = np.flatnonzero(mask)
            j = idx[int(np.argmax(lhs[idx]))]
            worsts.append(float(lhs[j]))
            args.append(int(j))
        else:
            worsts.append(-math.inf)
            args.append(None)
    return worsts, args


def certify(setup: RedesignSetup, a: float, n_samples: int = 10_000) -> CertificationReport:
    """Check the three per-region contraction inequalities on the unit sphere.

    Degree-2 homogeneity of every left-hand side makes unit-sphere sampling
    decide the global sign pattern, up to the density of the sample set.
    Pass means: for every sampled state the worst-case next energy under the
    redesigned feedback is at most sigma times the current energy, with at
    least the 1e-9 margin floor.
    """
    if a < 0.0:
        raise ValueError(f"a must be >= 0, got {a}")
    dim = setup.plant.n + setup.plant.r
    Z = sphere_samples(dim, n_random=n_samples)
    co = _sample_coeffs(setup, Z)
    worsts, args = _region_worsts(setup, co, a, setup.cert.sigma)
    overall = max(worsts)
    points = tuple(None if j is None else Z[j].copy() for j in args)
    return CertificationReport(
        a=a,
        sigma=setup.cert.sigma,
        region1=worsts[0],
        region2=worsts[1],
        region3=worsts[2],
        margin=-overall,
        samples=Z.shape[0],
        passed=bool(overall <= -MARGIN_FLOOR),
        worst_points=points,
    )


def certify_nominal(setup: RedesignSetup, a: float, n_samples: int = 10_000,
                    sigma=None) -> CertificationReport:
    """Same sphere harness applied to the nominal predictor law k'F_r.

    The nominal law is linear in z, so there is no region split; the single
    worst value is reported in the region1 slot.
    """
    if a < 0.0:
        raise ValueError(f"a must be >= 0, got {a}")
    if sigma is None:
        sigma = setup.cert.sigma
    dim = setup.plant.n + setup.plant.r
    Z = sphere_samples(dim, n_random=n_samples)
    co = _sample_coeffs(setup, Z)
    w = setup.stab.k @ setup.plant.predictor_rows()[setup.plant.r]
    u = Z @ w
    resid = co["rbase"] + a * a * co["ra"] - sigma * co["vb"]
    lhs = (setup.p * u * u + 2.0 * co["bv"] * u
           + 2.0 * a * np.abs(co["kv"] + co["Lv"] * u) + resid)
    j = int(np.argmax(lhs))
    worst = float(lhs[j])
    return CertificationReport(
        a=a,
        sigma=float(sigma),
        region1=worst,
        region2=-math.inf,
        region3=-math.inf,
        margin=-worst,
        samples=Z.shape[0],
        passed=bool(worst <= -MARGIN_FLOOR),
        worst_points=(Z[j].copy(), None, None),
    )


def default_sigma_grid(lam: float, c: float) -> np.ndarray:
    lo = lam + 1.0 / c
    if not lo < 1.0:
        raise ConfigurationError(
            f"lambda + 1/c = {lo:.6g} >= 1: no admissible contraction target"
        )
    return np.linspace(lo, 1.0, SIGMA_GRID_POINTS + 1)[:-1]


def choose_sigma(plant: LinearPlant, stab: NominalStabilizer, c: float, phi: float,
                 a: float, n_samples: int = 10_000) -> float:
    """Smallest sigma on the default grid at which certification passes.

    The certification left sides decrease in sigma, so the scan is from the
    bottom of [lambda + 1/c, 1).
    """
    grid = default_sigma_grid(stab.lam, c)
    setup = RedesignSetup(plant, stab, BacksteppingCertificate(c, phi, float(grid[0]), stab.lam))
    Z = sphere_samples(plant.n + plant.r, n_random=n_samples)
    co = _sample_coeffs(setup, Z)
    for sigma in grid:
        worsts, _ = _region_worsts(setup, co, a, float(sigma))
        if max(worsts) <= -MARGIN_FLOOR:
            return float(sigma)
    raise ConfigurationError(
        f"certification fails for every sigma in [{grid[0]:.4f}, {grid[-1]:.4f}] at a={a}"
    )


def max_certified_a(setup: RedesignSetup, a_hi: float, resolution: float = 1e-4,
                    sigma_grid=None, n_samples: int = 10_000) -> float:
    """Largest a certified by bisection on [0, a_hi] (returns a_hi if saturated).

    Both the regions and the residual depend on a, so every probe re-runs
    the full certification.  With sigma_grid, a probe passes if any grid
    sigma certifies; monotonicity in sigma means only the largest grid point
    needs testing.
    """
    if a_hi < 0.0:
        raise ValueError(f"a_hi must be >= 0, got {a_hi}")
    Z = sphere_samples(setup.plant.n + setup.plant.r, n_random=n_samples)
    co = _sample_coeffs(setup, Z)
    if sigma_grid is not None:
        probe_sigma = float(np.max(np.asarray(sigma_grid, dtype=float)))
    else:
        probe_sigma = setup.cert.sigma

    def passes(a: float) -> bool:
        worsts, _ = _region_worsts(setup, co, a, probe_sigma)
        return max(worsts) <= -MARGIN_FLOOR

    if not passes(0.0):
        raise ConfigurationError(
            "certification fails already at a = 0; the weights (c, phi, sigma) "
            "do not certify the disturbance-free loop"
        )
    if passes(a_hi):
        return float(a_hi)
    lo, hi = 0.0, float(a_hi)
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo


def sweep_certified_a(plant: LinearPlant, stab: NominalStabilizer, params, a_hi: float,
                      resolution: float = 1e-4, n_samples: int = 4_000):
    """Best certified a across a caller-given (c, phi) grid; sigma auto per point."""
    best = (0.0, None)
    for c, phi in params:
        try:
            grid = default_sigma_grid(stab.lam, c)
            setup = RedesignSetup(
                plant, stab, BacksteppingCertificate(c, phi, float(grid[0]), stab.lam)
            )
            a_star = max_certified_a(setup, a_hi, resolution, sigma_grid=grid,
                                     n_samples=n_samples)
        except ConfigurationError:
            continue
        if a_star > best[0]:
            best = (a_star, (c, phi))
    return best


# --- scalar benchmark: the piecewise law of the worked example and its
# --- circle-parametrized certification, both implemented verbatim

def scalar_redesign_feedback(x: float, y1: float, a: float, q: float) -> float:
    """The benchmark's continuous piecewise-linear redesigned law (degree 1).

    Regions are keyed on x^2 + x y1 against (a/q) x^2; at x = 0 the first
    branch applies and both outer branches agree at -y1.
    """
    if not q > 0.0:
        raise ValueError(f"q must be > 0, got {q}")
    if a < 0.0:
        raise ValueError(f"a must be >= 0, got {a}")
    s = x * x + x * y1
    thr = (a / q) * x * x
    if s >= thr:
        return -(1.0 + a / q) * x - y1
    if s <= -thr:
        return -(1.0 - a / q) * x - y1
    return -2.0 * x - 2.0 * y1


def scalar_certify(a: float, q: float, grid_size: int = 100_000) -> tuple[bool, float]:
    """Evaluate the benchmark's three strict circle inequalities on a theta grid.

    Returns (passed, worst_margin) with margin = max over applicable points
    of lhs - rhs; pass requires a strictly negative margin.
    """
    if not q > 0.0:
        raise ValueError(f"q must be > 0, got {q}")
    if a < 0.0:
        raise ValueError(f"a must be >= 0, got {a}")
    if grid_size < 10_000:
        raise ValueError(f"grid_size must be >= 10000, got {grid_size}")
    th = np.linspace(0.0, 2.0 * np.pi, grid_size, endpoint=False)
    c2 = np.cos(th) ** 2
    s2 = np.sin(2.0 * th)
    reg1 = s2 >= 2.0 * (a / q - 1.0) * c2
    reg2 = s2 <= -2.0 * (a / q + 1.0) * c2
    reg3 = (~reg1) & (~reg2)
    lhs1 = (2.0 * a - a * a / q + (1.0 + q) * a * a - 1.0) * c2 + (a + 1.0 - q) * s2 - (q - 1.0)
    lhs2 = ((1.0 + q) * a * a - 2.0 * a - a * a / q - 1.0) * c2 + (1.0 - a - q) * s2 - (q - 1.0)
    lhs3 = ((1.0 + q) * a * a - 1.0) * c2 + 1.0 + s2
    margin = -math.inf
    for mask, lhs in ((reg1, lhs1), (reg2, lhs2), (reg3, lhs3)):
        if np.any(mask):
            margin = max(margin, float(np.max(lhs[mask])))
    return margin < 0.0, margin


def nominal_scalar_certify(a: float, q: float, grid_size: int = 100_000) -> tuple[bool, float]:
    """Same circle harness applied to the non-redesigned law u = -x - y1.

    With the energy x^2 + q(x+y1)^2 the worst next value is exact:
    (x+y1)^2 + (1+q)a^2 x^2 + 2a|x(x+y1)|, so the contraction test is a
    single inequality over the circle.
    """
    if not q > 0.0:
        raise ValueError(f"q must be > 0, got {q}")
    if a < 0.0:
        raise ValueError(f"a must be >= 0, got {a}")
    if grid_size < 10_000:
        raise ValueError(f"grid_size must be >= 10000, got {grid_size}")
    th = np.linspace(0.0, 2.0 * np.pi, grid_size, endpoint=False)
    x = np.cos(th)
    y = np.sin(th)
    f1 = x + y
    lhs = (1.0 - q) * f1 * f1 + ((1.0 + q) * a * a - 1.0) * x * x + 2.0 * a * np.abs(x * f1)
    margin = float(np.max(lhs))
    return margin < 0.0, margin


def scalar_max_certified_a(q: float, grid_size: int = 20_000, resolution: float = 1e-5,
                           certifier=scalar_certify) -> float:
    """Largest a the circle harness certifies at a fixed q, by bisection."""
    if not certifier(0.0, q, grid_size)[0]:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if certifier(mid, q, grid_size)[0]:
            lo = mid
        else:
            hi = mid
    return lo


def scalar_best_a(q_lo: float = 1.0, q_hi: float = 3.0, step: float = 0.01,
                  grid_size: int = 20_000, certifier=scalar_certify) -> tuple[float, float]:
    """Largest certified a over a q scan, then golden-section refinement.

    Returns (best_a, best_q).  Applies to either the redesigned-law harness
    (default) or the nominal-law harness via `certifier`.
    """
    qs = np.arange(q_lo, q_hi + 0.5 * step, step)
    best_a, best_q = -1.0, qs[0]
    for q in qs:
        a_q = scalar_max_certified_a(float(q), grid_size, certifier=certifier)
        if a_q > best_a:
            best_a, best_q = a_q, float(q)
    lo = max(q_lo, best_q - step)
    hi = min(q_hi, best_q + step)
    q_ref, a_ref = golden_section_max(
        lambda q: scalar_max_certified_a(q, grid_size, certifier=certifier), lo, hi, tol=1e-3
    )
    if a_ref > best_a:
        best_a, best_q = a_ref, q_ref
    return best_a, best_q
