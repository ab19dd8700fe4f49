"""Command-line front end: scenario ingestion and the four analysis commands.

Scenario files are JSON objects with plant / stabilizer / certificate /
simulation blocks and a feedback selector; matrices are row-major nested
arrays and are dimension-checked on load.  All outputs are deterministic
given the scenario file and flags: seeds live in the scenario, never the
wall clock.  Exit codes: 0 success/pass, 1 analytic failure (certification
fail, divergence), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import robustness
from .backstepping import BacksteppingCertificate, nominal_predictor_feedback
from .model import ExtendedState, LinearPlant, NominalStabilizer, validate_stabilizer
from .redesign import (
    ConfigurationError,
    RedesignSetup,
    certify,
    certify_nominal,
    choose_sigma,
    default_sigma_grid,
    max_certified_a,
    redesigned_feedback,
    scalar_certify,
    scalar_redesign_feedback,
    scalar_max_certified_a,
)
from .simulate import DisturbanceStrategy, decay_rate, simulate


class ScenarioError(ValueError):
    """A scenario file failed to parse; the message is field-addressed."""


def worker_count() -> int:
    """Worker cap from DELAYPRED_THREADS (0 or unset = auto)."""
    raw = os.environ.get("DELAYPRED_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(f"DELAYPRED_THREADS: expected an integer, got {raw!r}")
    if n < 0:
        raise ScenarioError(f"DELAYPRED_THREADS: must be >= 0, got {n}")
    return n if n > 0 else (os.cpu_count() or 1)


def _need(block: dict, key: str, path: str):
    if key not in block:
        raise ScenarioError(f"{path}.{key}: missing required field")
    return block[key]


def _block(doc: dict, key: str) -> dict:
    blk = _need(doc, key, "scenario")
    if not isinstance(blk, dict):
        raise ScenarioError(f"scenario.{key}: expected an object, got {type(blk).__name__}")
    return blk


@dataclass(frozen=True)
class Scenario:
    plant: LinearPlant
    stab: NominalStabilizer
    cert_spec: object          # dict, "auto", or None
    feedback: dict             # {"kind": ..., possibly "q": ...}
    sim: dict | None           # T, x0, y0, strategy, seed


def parse_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})")
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: expected a JSON object at top level")

    pb = _block(doc, "plant")
    try:
        plant = LinearPlant(
            A=np.array(_need(pb, "A", "plant"), dtype=float),
            B=np.array(_need(pb, "B", "plant"), dtype=float),
            G=np.array(_need(pb, "G", "plant"), dtype=float),
            a=float(_need(pb, "a", "plant")),
            r=int(_need(pb, "r", "plant")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"plant: {exc}")

    sb = _block(doc, "stabilizer")
    try:
        k = np.array(_need(sb, "k", "stabilizer"), dtype=float)
        P = np.array(_need(sb, "P", "stabilizer"), dtype=float)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"stabilizer: {exc}")
    lam_spec = sb.get("lambda", "auto-validate")
    try:
        if lam_spec == "auto-validate":
            probe = NominalStabilizer(k=k, P=P, lam=0.0)
            lam = validate_stabilizer(plant, probe)
            if lam >= 1.0:
                raise ScenarioError(
                    f"stabilizer.lambda: auto-validate found lambda*={lam:.6g} >= 1; "
                    "the nominal loop is not a contraction under P"
                )
        else:
            lam = float(lam_spec)
        stab = NominalStabilizer(k=k, P=P, lam=lam)
        lam_star = validate_stabilizer(plant, stab)
        if lam_star > stab.lam + 1e-10:
            raise ScenarioError(
                f"stabilizer.lambda: {stab.lam} is infeasible; smallest feasible "
                f"value is {lam_star:.12g}"
            )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"stabilizer: {exc}")

    fb_spec = doc.get("feedback", "nominal")
    if isinstance(fb_spec, str):
        feedback = {"kind": fb_spec}
    elif isinstance(fb_spec, dict) and "kind" in fb_spec:
        feedback = dict(fb_spec)
    else:
        raise ScenarioError("feedback: expected a selector string or an object with 'kind'")
    if feedback["kind"] not in ("nominal", "redesigned", "scalar_redesign"):
        raise ScenarioError(f"feedback.kind: unknown selector {feedback['kind']!r}")
    if feedback["kind"] == "scalar_redesign":
        if "q" not in feedback:
            raise ScenarioError("feedback.q: scalar_redesign needs a q value")
        feedback["q"] = float(feedback["q"])
        if plant.n != 1 or plant.r != 1:
            raise ScenarioError(
                f"feedback: scalar_redesign needs n=1, r=1, got n={plant.n}, r={plant.r}"
            )

    sim = None
    if "simulation" in doc:
        mb = _block(doc, "simulation")
        sim = {
            "T": int(_need(mb, "T", "simulation")),
            "x0": np.array(_need(mb, "x0", "simulation"), dtype=float),
            "y0": np.array(_need(mb, "y0", "simulation"), dtype=float),
            "strategy": mb.get("strategy", "zero"),
            "seed": int(mb.get("seed", 0)),
        }
        if sim["T"] < 1:
            raise ScenarioError(f"simulation.T: must be >= 1, got {sim['T']}")
        if sim["x0"].shape != (plant.n,):
            raise ScenarioError(
                f"simulation.x0: expected length {plant.n}, got {sim['x0'].shape}"
            )
        if sim["y0"].shape != (plant.r,):
            raise ScenarioError(
                f"simulation.y0: expected length {plant.r}, got {sim['y0'].shape}"
            )

    return Scenario(plant=plant, stab=stab, cert_spec=doc.get("certificate", "auto"),
                    feedback=feedback, sim=sim)


def _resolve_certificate(sc: Scenario, need_redesign_sigma: bool) -> BacksteppingCertificate:
    lam = sc.stab.lam
    spec = sc.cert_spec
    if spec == "auto" or spec is None:
        c = 2.0 / (1.0 - lam)
        phi = 1.0
        sigma_spec = "auto"
    elif isinstance(spec, dict):
        c = float(_need(spec, "c", "certificate"))
        phi = float(_need(spec, "phi", "certificate"))
        sigma_spec = spec.get("sigma", "auto")
    else:
        raise ScenarioError("certificate: expected an object or \"auto\"")
    if sigma_spec == "auto":
        if need_redesign_sigma:
            sigma = choose_sigma(sc.plant, sc.stab, c, phi, sc.plant.a)
        else:
            sigma = lam + 1.0 / c      # the backstepping decay level
            if sigma >= 1.0:
                raise ScenarioError(
                    f"certificate.c: lambda + 1/c = {sigma:.6g} >= 1; increase c"
                )
    else:
        sigma = float(sigma_spec)
    try:
        return BacksteppingCertificate(c=c, phi=phi, sigma=sigma, lam=lam)
    except ValueError as exc:
        raise ScenarioError(f"certificate: {exc}")


def _parse_strategy(spec, plant: LinearPlant, seed: int) -> DisturbanceStrategy:
    if isinstance(spec, str):
        kind, value = spec, 0.0
    elif isinstance(spec, dict) and "kind" in spec:
        kind = spec["kind"]
        value = float(spec.get("value", 0.0))
    else:
        raise ScenarioError("simulation.strategy: expected a string or an object with 'kind'")
    try:
        if kind == "zero":
            return DisturbanceStrategy.zero()
        if kind == "constant":
            if abs(value) > plant.a + 1e-15:
                raise ScenarioError(
                    f"simulation.strategy.value: |{value}| exceeds the bound a={plant.a}"
                )
            return DisturbanceStrategy.constant(value)
        if kind == "uniform_random":
            return DisturbanceStrategy.uniform_random(seed)
        if kind == "greedy_adversary":
            return DisturbanceStrategy.greedy_adversary()
    except ValueError as exc:
        raise ScenarioError(f"simulation.strategy: {exc}")
    raise ScenarioError(f"simulation.strategy.kind: unknown kind {kind!r}")


FLOAT6 = "{:.6f}".format


def cmd_table1(output: str) -> int:
    rows = robustness.table1()
    lines = ["r,necessary,sufficient,c_star"]

    def render(bound):
        c = "" if bound.c_star is None else FLOAT6(bound.c_star)
        return f"{bound.r},{FLOAT6(bound.necessary)},{FLOAT6(bound.sufficient)},{c}"

    # rows are independent; a worker pool only matters for perf, order is fixed
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lines += list(pool.map(render, rows))
    else:
        lines += [render(b) for b in rows]
    text = "\n".join(lines) + "\n"
    if output == "-":
        sys.stdout.write(text)
        return 0
    try:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"error: cannot write {output}: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_bound(r: int) -> int:
    if r < 0:
        print("error: --r must be >= 0", file=sys.stderr)
        return 2
    necessary = robustness.necessary_bound(r)
    if r == 0:
        sufficient, c_star = 1.0, float("nan")
    else:
        sufficient, c_star, _ = robustness.sufficient_bound(r)
        c_star = float("nan") if c_star is None else c_star
    print(f"necessary={FLOAT6(necessary)} sufficient={FLOAT6(sufficient)} "
          f"c_star={FLOAT6(c_star)}")
    return 0


def cmd_certify(scenario_path: str, a: float | None, search: float | None) -> int:
    try:
        sc = parse_scenario(scenario_path)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    kind = sc.feedback["kind"]
    try:
        if kind == "scalar_redesign":
            q = sc.feedback["q"]
            if search is not None:
                best = scalar_max_certified_a(q, grid_size=20_000)
                best = min(best, search)
                print(f"harness=scalar q={q:.6f} largest_certified_a={best:.6f}")
                return 0
            passed, margin = scalar_certify(a, q, grid_size=100_000)
            print(f"harness=scalar q={q:.6f} a={a:.6f} margin={margin:.9g} "
                  f"pass={'true' if passed else 'false'}")
            return 0 if passed else 1

        cert = _resolve_certificate(sc, need_redesign_sigma=(kind == "redesigned"))
        setup = RedesignSetup(sc.plant, sc.stab, cert)
        harness = certify if kind == "redesigned" else certify_nominal
        if search is not None:
            grid = default_sigma_grid(sc.stab.lam, cert.c)
            best = max_certified_a(setup, search, sigma_grid=grid) if kind == "redesigned" \
                else _search_nominal(setup, search, grid)
            saturated = best >= search
            print(f"harness={kind} largest_certified_a={best:.6f} "
                  f"saturated={'true' if saturated else 'false'}")
            return 0
        report = harness(setup, a)
        print(report.to_text())
        return 0 if report.passed else 1
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _search_nominal(setup: RedesignSetup, a_hi: float, sigma_grid) -> float:
    probe_sigma = float(np.max(sigma_grid))

    def passes(a):
        rep = certify_nominal(setup, a, sigma=probe_sigma)
        return rep.passed

    if not passes(0.0):
        raise ConfigurationError("nominal certification fails already at a = 0")
    if passes(a_hi):
        return float(a_hi)
    lo, hi = 0.0, float(a_hi)
    while hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo


def cmd_simulate(scenario_path: str, output: str) -> int:
    try:
        sc = parse_scenario(scenario_path)
        if sc.sim is None:
            raise ScenarioError("simulation: block is required for the simulate command")
        kind = sc.feedback["kind"]
        cert = _resolve_certificate(sc, need_redesign_sigma=(kind == "redesigned"))
        setup = None
        if kind == "nominal":
            policy = lambda z: nominal_predictor_feedback(sc.plant, sc.stab, z)
        elif kind == "redesigned":
            setup = RedesignSetup(sc.plant, sc.stab, cert)
            policy = lambda z: redesigned_feedback(setup, z, sc.plant.a)
        else:
            q = sc.feedback["q"]
            policy = lambda z: scalar_redesign_feedback(
                float(z.x[0]), float(z.y[0]), sc.plant.a, q
            )
        strategy = _parse_strategy(sc.sim["strategy"], sc.plant, sc.sim["seed"])
        z0 = ExtendedState(sc.sim["x0"], sc.sim["y0"])
        traj = simulate(sc.plant, policy, strategy, z0, sc.sim["T"],
                        stab=sc.stab, cert=cert, setup=setup)
    except (ScenarioError, ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(traj.to_csv())
    except OSError as exc:
        print(f"error: cannot write {output}: {exc}", file=sys.stderr)
        return 2
    rate = decay_rate(traj)
    print(f"decay_rate={rate:.12g} diverged={'true' if traj.diverged else 'false'}")
    return 1 if traj.diverged else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="delaypred",
        description="Predictor-feedback synthesis and robustness certification "
                    "for discrete-time systems with input delays.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_table = sub.add_parser("table1", help="robustness margins of the scalar benchmark")
    p_table.add_argument("-o", "--output", default="-", help="CSV path ('-' = stdout)")

    p_bound = sub.add_parser("bound", help="necessary/sufficient margin for one delay")
    p_bound.add_argument("--r", type=int, required=True)

    p_cert = sub.add_parser("certify", help="certify an uncertainty magnitude")
    p_cert.add_argument("scenario")
    group = p_cert.add_mutually_exclusive_group(required=True)
    group.add_argument("--a", type=float, help="magnitude to certify")
    group.add_argument("--search", type=float, help="bisect the largest certified a below this")

    p_sim = sub.add_parser("simulate", help="run a closed-loop scenario to CSV")
    p_sim.add_argument("scenario")
    p_sim.add_argument("-o", "--output", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "table1":
            return cmd_table1(args.output)
        if args.command == "bound":
            return cmd_bound(args.r)
        if args.command == "certify":
            return cmd_certify(args.scenario, args.a, args.search)
        return cmd_simulate(args.scenario, args.output)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
