"""Acceptance criteria 1-10, one PASS/FAIL line each (shown in the terminal summary)."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from flowtop import brownian
from flowtop.errors import NoValidTime
from flowtop.experiment import (build_experiment, estimate_invariant_measure, evaluate_Z, run_lemma1_certificate,
                                run_theorem_experiment, torus_arc_config)
from flowtop.fields import (GeometricMultiplicative, HyperbolicContraction, LinearContraction,
                            SphereGradientFrame, TorusTranslation)
from flowtop.flow import integrate, simulate, step_doubling_order, first_exit_steps, exit_fraction
from flowtop.manifolds import Euclidean, FlatTorus, Hyperbolic2, Sphere
from flowtop.moments import (CompactTangentSet, diameter_bound_ensemble, diameter_series, grassmann_planes,
                             moment_integral_estimate)
from flowtop.regions import Region
from flowtop.spheremaps import make_fixture
from flowtop.tolerances import TOL

import oracles
from conftest import ACCEPTANCE_LINES, all_manifolds

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
LINEAR = CONFIGS / "linear_contraction.json"
TORUS = CONFIGS / "torus_translation.json"


class Criterion:
    """Collects named checks and records one summary line with the runtime."""

    def __init__(self, number, budget_s):
        self.number, self.budget = number, budget_s
        self.failed = []

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def check(self, name, ok, detail=""):
        if not ok:
            self.failed.append(f"{name} {detail}".strip())

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        if exc_type is not None:
            self.failed.append(f"raised {exc_type.__name__}: {exc}")
        self.check("runtime", dt < self.budget, f"{dt:.1f}s >= {self.budget}s")
        status = "FAIL" if self.failed else "PASS"
        line = f"{status} criterion {self.number} ({dt:.1f}s)"
        if self.failed:
            line += ": " + "; ".join(self.failed)
        ACCEPTANCE_LINES.append(line)
        print(line)
        if exc_type is None:
            assert not self.failed, line
        return False


def test_criterion_01_geometry():
    with Criterion(1, 10) as c:
        rng = np.random.default_rng(2024)
        for M in all_manifolds():
            n = 1000
            x = M.random_point(rng, (n,))
            v = M.random_tangent(rng, x)
            r = rng.uniform(0, min(0.9 * M.injectivity_radius(), 5.0), n)
            v = v / M.norm(x, v)[:, None] * r[:, None]
            y = M.exp(x, v)
            scale = max(1.0, getattr(M, "radius", 1.0))
            c.check(f"{M!r} constraint", np.max(np.abs(M.constraint_residual(y))) <= TOL.constraint * scale)
            err = np.linalg.norm(M.log(x, y) - v, axis=-1) / (1 + r)
            c.check(f"{M!r} round trip", np.max(err) <= TOL.round_trip, f"max={np.max(err):.2e}")
            a, b, z = (M.random_point(rng, (n,)) for _ in range(3))
            dab = M.dist(a, b)
            c.check(f"{M!r} symmetry", np.allclose(dab, M.dist(b, a), atol=1e-9))
            c.check(f"{M!r} identity", np.all(M.dist(a, a) <= 1e-7))
            c.check(f"{M!r} triangle", np.all(dab <= M.dist(a, z) + M.dist(z, b) + 1e-9))
            s, s2 = rng.uniform(0, 1, (2, n))
            d = M.dist(x, y)
            gap = np.abs(M.dist(M.geodesic_point(x, y, s), M.geodesic_point(x, y, s2)) - np.abs(s - s2) * d)
            c.check(f"{M!r} geodesic", np.max(gap) <= 1e-7, f"max={np.max(gap):.2e}")


def test_criterion_02_sde_oracles():
    with Criterion(2, 120) as c:
        # (a) OU mean and variance at t = 1
        tr = simulate(LinearContraction(1, 1.0, 1.0), np.array([[0.5]]), 0.01, 100, 11, 10000,
                      record_steps=[100], keep_tangents=False)
        x = tr.positions[:, 0, 0, 0]
        n = len(x)
        m, var = oracles.ou_mean(0.5, 1, 1), oracles.ou_var(1, 1, 1)
        c.check("OU mean", abs(x.mean() - m) < 3 * math.sqrt(var / n), f"{x.mean():.4f} vs {m:.4f}")
        c.check("OU variance", abs(x.var(ddof=1) - var) < 3 * var * math.sqrt(2 / (n - 1)),
                f"{x.var(ddof=1):.4f} vs {var:.4f}")
        # (b) GBM tangent per realization; Heun error is about 0.06 dt here, so dt = 2e-6
        spec, t, dt = GeometricMultiplicative(1.0, 0.5), 0.5, 2e-6
        steps = round(t / dt)
        dB = brownian.increment_block(21, range(8), steps, 1, dt)
        out = integrate(spec, np.full((8, 1, 1), 1.3), dB, dt, v0=np.ones((8, 1, 1)), keep_positions=False)
        exact = np.exp(-1.0 * t + 0.5 * dB.sum(axis=1)[:, 0])
        rel = np.abs(out["v"][:, 0, 0] / exact - 1)
        c.check("GBM tangent", np.max(rel) <= 1e-6, f"max={np.max(rel):.2e}")
        # (c) empirical strong order
        rep = step_doubling_order(spec, [[1.0]], 1.0, 2**-10, 4, 5000, 5)
        c.check("step doubling order", rep.order >= 1.0, f"order={rep.order:.3f}")


def test_criterion_03_exit_time():
    with Criterion(3, 120) as c:
        n = 10000
        steps = first_exit_steps(LinearContraction(1, 0.0, 1.0), [[0.0]], Region.ball([0.0], 1.0), 0.1, 1e-4, n, 8)
        p = exit_fraction(steps, 0.1, 1e-4).estimate
        p0 = oracles.EXIT_P_T01
        se = math.sqrt(p0 * (1 - p0) / n)
        c.check("P(tau <= 0.1)", abs(p - p0) < 3 * se, f"{p:.5f} vs {p0:.5f} (se {se:.5f})")


def test_criterion_04_lemma1():
    with Criterion(4, 300) as c:
        exp = build_experiment(LINEAR)
        rows = run_lemma1_certificate(exp, [0.2, 0.1, 0.05])
        deltas = [r.delta for r in rows]
        c.check("certified", all(d is not None and d > 10 * exp.dt for d in deltas), str(deltas))
        if all(d is not None for d in deltas):
            c.check("monotone", all(a >= b for a, b in zip(deltas, deltas[1:])), str(deltas))


def diameter_cases():
    T2 = FlatTorus.unit(2)
    return [
        ("circle", Euclidean(2), 64, {"radius_length": 1.0}, LinearContraction(2, 1.0, 0.3)),
        ("circle", Sphere(2), 64, {"radius_length": 0.8}, SphereGradientFrame(Sphere(2))),
        ("circle", Hyperbolic2(), 64, {"radius_length": 0.5}, HyperbolicContraction(1.0, 0.4)),
        ("circle", T2, 32, {"radius_length": 0.1}, TorusTranslation(T2, 0.5)),
        ("segment_loop", Euclidean(1), 16, {"radius_length": 0.5}, GeometricMultiplicative(1.0, 0.5)),
        ("torus_winding", T2, 64, {}, TorusTranslation(T2, 0.5)),
        ("identity_sphere", Sphere(2), 1, {}, SphereGradientFrame(Sphere(2))),
        ("ellipsoid", Euclidean(3), 1, {}, LinearContraction(3, 1.0, 0.3)),
        ("disk_fold", Euclidean(2), 1, {}, LinearContraction(2, 0.5, 0.3)),
    ]


def test_criterion_05_diameter_bound():
    with Criterion(5, 180) as c:
        cases = diameter_cases()
        per = math.ceil(1000 / len(cases))
        total = 0
        for k, (name, M, res, params, spec) in enumerate(cases):
            sigma = make_fixture(name, M, res, **params)
            planes = grassmann_planes(2, 16) if sigma.n == 2 else None
            d, h, ok = diameter_bound_ensemble(sigma, spec, 0.5, per, 100 + k, 0.01, circles=planes,
                                               V=None if sigma.n == 1 else 360)
            total += len(ok)
            c.check(f"{name} on {M!r}", ok.all(), f"{(~ok).sum()} violations, worst ratio {(d / h).max():.6f}")
        c.check("realizations", total >= 1000, str(total))


def test_criterion_06_diameter_decay():
    with Criterion(6, 180) as c:
        M = Euclidean(2)
        sigma = make_fixture("circle", M, 64, radius_length=1.0)
        d0 = M.diameter(sigma.image)
        lam = 1.0
        t_grid = np.array([0.5, 1.0, 1.5, 2.0])
        det = diameter_series(sigma, LinearContraction(2, lam, 0.0), t_grid, 2, 0, 1e-3).mean(axis=0)
        err = np.max(np.abs(det - np.exp(-lam * t_grid) * d0))
        c.check("deterministic", err <= 1e-6, f"max err {err:.2e}")
        noisy = diameter_series(sigma, LinearContraction(2, lam, 0.5), t_grid, 10000, 1, 0.01).mean(axis=0)
        rate = -np.polyfit(t_grid, np.log(noisy), 1)[0]
        c.check("fitted rate", abs(rate - lam) <= 0.15 * lam, f"rate={rate:.4f}")


def test_criterion_07_moment_integral():
    with Criterion(7, 180) as c:
        lam, sig = 1.0, 0.5
        L = CompactTangentSet(np.array([[1.0]]), np.array([[1.0]]), "unit vector at 1")
        rep = moment_integral_estimate(GeometricMultiplicative(lam, sig), L, 6.0, 0.01, 10000, 3)
        closed = 1.0 / (lam - sig**2 / 2)
        c.check("GBM integral", abs(rep.truncated_integral / closed - 1) <= 0.05,
                f"{rep.truncated_integral:.4f} vs {closed:.4f}")
        c.check("GBM converged", rep.converged)
        T = FlatTorus.unit(2)
        Lt = CompactTangentSet(np.array([[0.2, 0.3]]), np.array([[1.0, 0.0]]), "unit vector")
        rt = moment_integral_estimate(TorusTranslation(T, 1.0), Lt, 5.0, 0.01, 200, 4)
        c.check("torus not converged", not rt.converged)
        c.check("torus growth slope", abs(rt.growth_slope - 1) <= 0.01, f"slope={rt.growth_slope:.4f}")


def test_criterion_08_theorem_positive():
    with Criterion(8, 600) as c:
        rep = run_theorem_experiment(build_experiment(LINEAR))
        c.check("inequality 9", rep.inequality_9_holds)
        c.check("inequality 10", rep.inequality_10_holds)
        c.check("bound", rep.bound_holds, f"P(Z) low {rep.p_Z.ci_low:.4f} vs mu/4 {rep.mu_hat / 4:.4f}")
        c.check("null homotopy rate", rep.null_homotopy_rate == 1.0, str(rep.null_homotopy_rate))
        c.check("chain success", rep.chain_success_rate >= 0.99, str(rep.chain_success_rate))


def test_criterion_09_negative_controls(tmp_path):
    from flowtop.cli import EXIT_NO_VALID_TIME, main

    with Criterion(9, 300) as c:
        exp = build_experiment(TORUS)
        witness, preserved = False, []
        for t in exp.config.t_grid_time:
            recs = evaluate_Z(exp, t, exp.config.trials, exp.config.seed + 2)
            witness |= any(r["witness_radius"] is not None for r in recs)
            preserved += [r["winding_preserved"] for r in recs if r["chain_ok"]]
        c.check("winding preserved", bool(preserved) and all(preserved), f"{sum(preserved)}/{len(preserved)}")
        c.check("no witness", not witness)
        try:
            run_theorem_experiment(exp)
            c.check("NoValidTime raised", False)
        except NoValidTime:
            pass
        c.check("CLI exit code", main(["theorem", "--config", str(TORUS), "--out", str(tmp_path)]) == EXIT_NO_VALID_TIME)
        m = estimate_invariant_measure(build_experiment(torus_arc_config(10000, 5)))
        c.check("arc measure", abs(m.mu_hat - 0.3) < 3 * m.mu_stderr, f"{m.mu_hat:.4f} +- {m.mu_stderr:.4f}")


def test_criterion_10_determinism(tmp_path):
    from flowtop.cli import main

    with Criterion(10, 600) as c:
        outs = []
        for w in (1, 4):
            d = tmp_path / f"workers{w}"
            c.check(f"exit workers={w}", main(["theorem", "--config", str(LINEAR), "--workers", str(w),
                                               "--out", str(d)]) == 0)
            outs.append([(d / f).read_bytes() for f in ("report.json", "trials.csv")])
        c.check("report.json identical", outs[0][0] == outs[1][0])
        c.check("trials.csv identical", outs[0][1] == outs[1][1])
        c.check("report parses", json.loads(outs[0][0])["trials"] == 1000)
