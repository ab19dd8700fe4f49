import numpy as np
import pytest

from delaypred import (
    BacksteppingCertificate,
    DisturbanceStrategy,
    ExtendedState,
    LinearPlant,
    RedesignSetup,
    ScalarExamplePlant,
    adversary_endpoint_check,
    choose_sigma,
    decay_rate,
    nominal_predictor_feedback,
    redesigned_feedback,
    simulate,
)

from conftest import random_stabilized_plant


def scalar_loop(a=0.0, r=1, c=2.0, phi=1.0, sigma=0.5):
    sp = ScalarExamplePlant(a=a, r=r)
    plant, stab = sp.plant(), sp.stabilizer()
    cert = BacksteppingCertificate(c=c, phi=phi, sigma=sigma, lam=0.0)
    policy = lambda z: nominal_predictor_feedback(plant, stab, z)
    return plant, stab, cert, policy


class TestSimulate:
    def test_deadbeat_settling(self):
        # integrator chain with r = 3: the state holds its value while the
        # pipeline drains, then lands exactly on zero at t = r + 1
        plant, stab, cert, policy = scalar_loop(r=3)
        z0 = ExtendedState(np.array([1.0]), np.zeros(3))
        traj = simulate(plant, policy, DisturbanceStrategy.zero(), z0, 10,
                        stab=stab, cert=cert)
        assert traj.us[0] == pytest.approx(-1.0)
        for t in range(4):
            assert traj.xs[t, 0] == pytest.approx(1.0)
        for t in range(4, 11):
            assert traj.xs[t, 0] == 0.0
        assert not traj.diverged

    def test_constant_solution_trajectory(self):
        r = 2
        d = 1.0 / (r + 1)
        plant, stab, cert, policy = scalar_loop(a=d, r=r)
        z0 = ExtendedState(np.array([1.0]), np.full(r, -d))
        traj = simulate(plant, policy, DisturbanceStrategy.constant(d), z0, 200,
                        stab=stab, cert=cert)
        assert np.max(np.abs(traj.xs - 1.0)) <= 1e-9
        assert decay_rate(traj) == pytest.approx(1.0, abs=1e-12)

    def test_zero_start_stays_zero(self):
        plant, stab, cert, policy = scalar_loop(a=0.3, r=2)
        z0 = ExtendedState(np.zeros(1), np.zeros(2))
        traj = simulate(plant, policy, DisturbanceStrategy.uniform_random(7), z0, 50,
                        stab=stab, cert=cert)
        assert np.all(traj.xs == 0.0) and np.all(traj.ys == 0.0)
        assert np.all(traj.vbars == 0.0)

    def test_uniform_random_respects_bound_and_seed(self):
        plant, stab, cert, policy = scalar_loop(a=0.25, r=1)
        z0 = ExtendedState(np.ones(1), np.zeros(1))
        t1 = simulate(plant, policy, DisturbanceStrategy.uniform_random(99), z0, 100,
                      stab=stab, cert=cert)
        t2 = simulate(plant, policy, DisturbanceStrategy.uniform_random(99), z0, 100,
                      stab=stab, cert=cert)
        assert np.max(np.abs(t1.ds[:-1])) <= 0.25
        assert np.array_equal(t1.ds[:-1], t2.ds[:-1])

    def test_constant_strategy_bound_checked(self):
        plant, stab, cert, policy = scalar_loop(a=0.1, r=1)
        z0 = ExtendedState(np.ones(1), np.zeros(1))
        with pytest.raises(ValueError):
            simulate(plant, policy, DisturbanceStrategy.constant(0.2), z0, 10,
                     stab=stab, cert=cert)

    def test_unknown_strategy_kind_rejected(self):
        with pytest.raises(ValueError):
            DisturbanceStrategy("chaotic")

    def test_divergence_truncates_with_flag(self):
        plant = LinearPlant(A=np.array([[12.0]]), B=np.ones(1), G=np.ones((1, 1)),
                            a=0.0, r=1)
        z0 = ExtendedState(np.array([1.0]), np.zeros(1))
        traj = simulate(plant, lambda z: 0.0, DisturbanceStrategy.zero(), z0, 500)
        assert traj.diverged
        assert len(traj) < 501
        assert not np.all(np.isfinite(traj.xs[-1]))

    def test_replay_determinism_bit_identical(self, rng):
        plant, stab = random_stabilized_plant(rng, n=2, r=2, a=0.2)
        cert = BacksteppingCertificate(c=2.0 / (1 - stab.lam), phi=1.0, sigma=0.9,
                                       lam=stab.lam)
        policy = lambda z: nominal_predictor_feedback(plant, stab, z)
        z0 = ExtendedState(np.array([0.4, -1.2]), np.array([0.1, 0.0]))
        runs = [
            simulate(plant, policy, DisturbanceStrategy.uniform_random(0xABCD), z0, 150,
                     stab=stab, cert=cert)
            for _ in range(2)
        ]
        assert runs[0].to_csv() == runs[1].to_csv()
        assert np.array_equal(runs[0].vbars, runs[1].vbars)

    def test_records_are_replayable(self):
        from delaypred import step_extended
        plant, stab, cert, policy = scalar_loop(a=0.3, r=2)
        z0 = ExtendedState(np.array([0.7]), np.array([-0.2, 0.4]))
        traj = simulate(plant, policy, DisturbanceStrategy.uniform_random(5), z0, 60,
                        stab=stab, cert=cert)
        for t in range(len(traj) - 1):
            nxt = step_extended(plant, traj.state(t), float(traj.us[t]), float(traj.ds[t]))
            assert np.array_equal(nxt.x, traj.xs[t + 1])
            assert np.array_equal(nxt.y, traj.ys[t + 1])


class TestDecayRate:
    def test_requires_energy_column(self):
        plant, _, _, policy = scalar_loop(r=1)
        z0 = ExtendedState(np.ones(1), np.zeros(1))
        traj = simulate(plant, policy, DisturbanceStrategy.zero(), z0, 10)
        with pytest.raises(ValueError, match="energy"):
            decay_rate(traj)

    def test_nominal_loop_meets_decay_bound(self, rng):
        plant, stab = random_stabilized_plant(rng, n=3, r=2)
        c = 2.0 / (1.0 - stab.lam)
        cert = BacksteppingCertificate(c=c, phi=1.0, sigma=0.9, lam=stab.lam)
        policy = lambda z: nominal_predictor_feedback(plant, stab, z)
        z0 = ExtendedState(rng.normal(size=3), rng.normal(size=2))
        traj = simulate(plant, policy, DisturbanceStrategy.zero(), z0, 120,
                        stab=stab, cert=cert)
        assert decay_rate(traj) <= stab.lam + 1.0 / c + 1e-9

    def test_certified_redesign_under_greedy_adversary(self):
        a = 0.5
        sp = ScalarExamplePlant(a=a, r=1)
        plant, stab = sp.plant(), sp.stabilizer()
        sigma = choose_sigma(plant, stab, c=1.81, phi=0.0, a=a, n_samples=4000)
        cert = BacksteppingCertificate(c=1.81, phi=0.0, sigma=sigma, lam=0.0)
        setup = RedesignSetup(plant, stab, cert)
        policy = lambda z: redesigned_feedback(setup, z, a)
        rng = np.random.default_rng(3)
        for _ in range(10):
            z0 = ExtendedState(rng.normal(size=1), rng.normal(size=1))
            traj = simulate(plant, policy, DisturbanceStrategy.greedy_adversary(), z0, 200,
                            setup=setup)
            assert decay_rate(traj) <= sigma + 1e-9

    def test_greedy_without_energy_reference_rejected(self):
        plant, _, _, policy = scalar_loop(a=0.3, r=1)
        z0 = ExtendedState(np.ones(1), np.zeros(1))
        with pytest.raises(ValueError, match="greedy"):
            simulate(plant, policy, DisturbanceStrategy.greedy_adversary(), z0, 10)


class TestAdversaryEndpoint:
    def test_scalar_instances(self, rng):
        setup_plant = ScalarExamplePlant(a=0.4, r=2)
        cert = BacksteppingCertificate(c=2.0, phi=1.0, sigma=0.9, lam=0.0)
        setup = RedesignSetup(setup_plant.plant(), setup_plant.stabilizer(), cert)
        for _ in range(10):
            z = ExtendedState(rng.normal(size=1), rng.normal(size=2))
            assert adversary_endpoint_check(setup, z, float(rng.normal()))

    def test_zero_uncertainty_vacuous(self, rng):
        sp = ScalarExamplePlant(a=0.0, r=1)
        cert = BacksteppingCertificate(c=2.0, phi=1.0, sigma=0.9, lam=0.0)
        setup = RedesignSetup(sp.plant(), sp.stabilizer(), cert)
        z = ExtendedState(rng.normal(size=1), rng.normal(size=1))
        assert adversary_endpoint_check(setup, z, 1.0)

    def test_random_multivariate_setups(self, rng):
        for _ in range(5):
            plant, stab = random_stabilized_plant(rng, n=3, r=3, a=0.3)
            cert = BacksteppingCertificate(c=1.6, phi=0.5, sigma=0.8, lam=stab.lam)
            setup = RedesignSetup(plant, stab, cert)
            z = ExtendedState(rng.normal(size=3), rng.normal(size=3))
            assert adversary_endpoint_check(setup, z, float(rng.normal()))


class TestCsv:
    def test_header_and_precision(self):
        plant, stab, cert, policy = scalar_loop(a=0.3, r=2)
        z0 = ExtendedState(np.array([1.0 / 3.0]), np.array([0.1, -0.7]))
        traj = simulate(plant, policy, DisturbanceStrategy.uniform_random(11), z0, 5,
                        stab=stab, cert=cert)
        lines = traj.to_csv().splitlines()
        assert lines[0] == "t,x_1,y_1,y_2,u,d,vbar"
        assert len(lines) == 7
        # 17 significant digits round-trip exactly
        first = lines[1].split(",")
        assert float(first[1]) == traj.xs[0, 0]
        assert float(first[6]) == traj.vbars[0]
        # final row carries the state only
        last = lines[-1].split(",")
        assert last[0] == "5" and last[4] == "nan" and last[5] == "nan"

    def test_zero_run_rows_all_zero(self):
        plant, stab, cert, policy = scalar_loop(a=0.0, r=1)
        z0 = ExtendedState(np.zeros(1), np.zeros(1))
        traj = simulate(plant, policy, DisturbanceStrategy.zero(), z0, 3,
                        stab=stab, cert=cert)
        for line in traj.to_csv().splitlines()[1:]:
            fields = line.split(",")
            assert float(fields[1]) == 0.0 and float(fields[2]) == 0.0
