import numpy as np
import pytest
from scipy.linalg import solve_discrete_lyapunov
from scipy.signal import place_poles

from delaypred import LinearPlant, NominalStabilizer, validate_stabilizer


def random_stabilized_plant(rng, n, r, a=0.0, g_scale=0.3):
    """Random plant plus a validated quadratic certificate for its nominal loop.

    The gain places the closed-loop poles at random distinct points inside
    the unit disc and P solves the discrete Lyapunov equation M'PM - P = -I,
    so the certificate is tight up to validate_stabilizer's lambda*.
    """
    for _ in range(100):
        A = rng.normal(size=(n, n))
        B = rng.normal(size=n)
        poles = np.sort(rng.uniform(0.05, 0.65, size=n)) * rng.choice([-1.0, 1.0], size=n)
        if n > 1 and np.min(np.diff(np.sort(poles))) < 1e-2:
            continue
        try:
            res = place_poles(A, B.reshape(-1, 1), poles)
        except ValueError:
            continue
        k = -res.gain_matrix.reshape(-1)
        M = A + np.outer(B, k)
        if np.max(np.abs(np.linalg.eigvals(M))) >= 0.999:
            continue
        P = solve_discrete_lyapunov(M.T, np.eye(n))
        P = 0.5 * (P + P.T)
        G = g_scale * rng.normal(size=(n, n))
        plant = LinearPlant(A=A, B=B, G=G, a=a, r=r)
        lam = validate_stabilizer(plant, NominalStabilizer(k=k, P=P, lam=0.0))
        if not lam < 0.999:
            continue
        return plant, NominalStabilizer(k=k, P=P, lam=lam)
    raise RuntimeError("failed to draw a stabilizable random plant")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
