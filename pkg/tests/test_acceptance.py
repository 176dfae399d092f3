"""Exit criteria for the package, one test per criterion.

Each test prints a PASS/FAIL line (collected in the terminal summary). The
Monte Carlo criteria take a few minutes each on a single core.
"""

import contextlib
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import ACCEPTANCE_LINES
from spatial_ksample import (
    EvaluationGrid,
    KernelSpec,
    Margin,
    ScenarioSpec,
    SpatialDataset,
    TestConfig,
    build_grid,
    compute_Tn,
    consistency_curve,
    kernel_eval,
    monte_carlo_rejection_rate,
    run_test,
    scaled_kernel,
)
from spatial_ksample.cli import main
from spatial_ksample.simulation import cdf_error_curve

import oracles

EPA = KernelSpec("epanechnikov")


@contextlib.contextmanager
def criterion(number, title, budget=None):
    start = time.perf_counter()
    info = {}
    try:
        yield info
        elapsed = time.perf_counter() - start
        if budget is not None:
            assert elapsed < budget, f"took {elapsed:.1f}s, budget {budget}s"
    except AssertionError as exc:
        elapsed = time.perf_counter() - start
        ACCEPTANCE_LINES.append(f"FAIL  {number:>2}. {title} [{elapsed:.1f}s] {info.get('detail', '')} :: {exc}")
        print(ACCEPTANCE_LINES[-1])
        raise
    ACCEPTANCE_LINES.append(f"PASS  {number:>2}. {title} [{elapsed:.1f}s] {info.get('detail', '')}")
    print(ACCEPTANCE_LINES[-1])


def test_01_bruteforce_equivalence():
    with criterion(1, "compute_Tn equals literal loop evaluation (200 fixtures, rel 1e-12)", 10) as info:
        rng = np.random.default_rng(20260101)
        worst = 0.0
        for _ in range(200):
            k = int(rng.integers(2, 4))
            n = int(rng.integers(k + 1, 13))
            labels = np.concatenate([np.arange(1, k + 1), rng.integers(1, k + 1, size=n - k)])
            rng.shuffle(labels)
            ds = SpatialDataset(np.round(rng.normal(size=n), 1), rng.random((n, 2)), labels,
                                tuple("abc"[:k]))
            grid = build_grid(ds, int(rng.integers(2, 4)))
            lam = float(rng.uniform(0.5, 1.5))
            got = compute_Tn(ds, grid, EPA, lam)
            measure = got.grid.weights * got.grid.cell_areas * got.grid.included
            want = oracles.statistic(ds.values, ds.locations, ds.labels, k, got.grid.nodes,
                                     measure, lam)
            rel = abs(got.total - want) / max(abs(want), 1e-300)
            worst = max(worst, rel if want != 0 else abs(got.total))
        info["detail"] = f"max rel err {worst:.2e}"
        assert worst <= 1e-12


def test_02_zero_statistic():
    with criterion(2, "duplicated populations give T_n = 0 and p = 1", 1) as info:
        rng = np.random.default_rng(2)
        v, s = rng.normal(size=20), rng.random((20, 2))
        ds = SpatialDataset(np.tile(v, 2), np.tile(s, (2, 1)), np.repeat([1, 2], 20), ("a", "b"))
        res = run_test(ds, TestConfig(replicates=200, grid_resolution=8))
        info["detail"] = f"T_n={res.observed_Tn} p={res.p_value}"
        assert res.observed_Tn == 0.0
        assert res.p_value == 1.0


def test_03_hand_fixture():
    with criterion(3, "two-point fixture gives T_n = 0.5", 1) as info:
        ds = SpatialDataset([0.0, 1.0], [(0, 0), (0, 0)], [1, 2], ("a", "b"))
        grid = EvaluationGrid([(0.0, 0.0)], [1.0], [1.0], [True])
        t = compute_Tn(ds, grid, EPA, 1.0).total
        info["detail"] = f"T_n={t!r}"
        assert abs(t - 0.5) <= 1e-12


def _disc_integral(f, radius):
    val, _ = integrate.dblquad(
        lambda y, x: f(x, y), -radius, radius,
        lambda x: -math.sqrt(max(radius**2 - x**2, 0.0)),
        lambda x: math.sqrt(max(radius**2 - x**2, 0.0)),
        epsabs=1e-11, epsrel=1e-11)
    return val


def test_04_kernel_normalization():
    with criterion(4, "kernels and scaled kernels integrate to 1 (tol 1e-6)", 5) as info:
        errs = []
        for kernel in (EPA, KernelSpec("gaussian", 3.0)):
            R = kernel.support_radius
            errs.append(abs(_disc_integral(lambda x, y: float(kernel_eval(kernel, (x, y))), R) - 1))
            for lam in (0.1, 1.0, 10.0):
                m = _disc_integral(lambda x, y: float(scaled_kernel(kernel, lam, (x, y))), lam * R)
                errs.append(abs(m - 1))
        info["detail"] = f"max err {max(errs):.1e}"
        assert max(errs) <= 1e-6


def test_05_empirical_size():
    with criterion(5, "size in [0.03, 0.07] and add-one p-values uniform (KS at 1%)", 600) as info:
        B = 200
        cfg = TestConfig(replicates=B, alpha=0.05, seed=505)
        mc = monte_carlo_rejection_rate(ScenarioSpec(n_i=(50, 50), seed=5050), cfg, 500)
        counts = np.rint(mc.p_values * B)
        assert np.allclose(counts / B, mc.p_values)
        add_one = (1 + counts) / (1 + B)
        ks = stats.kstest(add_one, "uniform")
        info["detail"] = f"rate={mc.rate:.3f} KS p={ks.pvalue:.3f}"
        assert 0.03 <= mc.rate <= 0.07
        assert ks.pvalue > 0.01


def test_06_power():
    with criterion(6, "power strictly increasing in n_i, >= 0.8 at n_i=100", 900) as info:
        cfg = TestConfig(replicates=200, alpha=0.05, seed=606)
        rates = []
        for n in (25, 50, 100):
            sc = ScenarioSpec(n_i=(n, n), margins=(Margin.normal(0, 1), Margin.normal(1, 1)),
                              seed=6060 + n)
            rates.append(monte_carlo_rejection_rate(sc, cfg, 200).rate)
        info["detail"] = "rates " + ", ".join(f"{r:.3f}" for r in rates)
        assert rates[0] < rates[1] < rates[2]
        assert rates[2] >= 0.8


def test_07_plugin_constant():
    with criterion(7, "mean T_n approaches C = 1/6, within 25% at n_i=1600", 600) as info:
        C = 1 / 6
        sc = ScenarioSpec(margins=(Margin.uniform(0, 1), Margin.uniform(0.5, 1.5)), seed=707)
        pts = consistency_curve(sc, [100, 400, 1600], 400)
        gaps = [abs(p.mean_Tn - C) for p in pts]
        info["detail"] = "mean T_n " + ", ".join(f"{p.mean_Tn:.5f}" for p in pts) + \
            " | gaps " + ", ".join(f"{g:.5f}" for g in gaps)
        assert gaps[0] >= gaps[1] >= gaps[2]
        assert gaps[2] <= 0.25 * C


def test_08_estimator_consistency():
    with criterion(8, "centre CDF error decreases over n = 100, 400, 1600", 300) as info:
        curve = cdf_error_curve(Margin.normal(), [100, 400, 1600], 200, seed=808)
        errs = [e for _, e in curve]
        info["detail"] = "MAE " + ", ".join(f"{e:.4f}" for e in errs)
        assert errs[0] > errs[1] > errs[2]


def _strip(text):
    doc = json.loads(text)
    doc.pop("timing")
    return json.dumps(doc, sort_keys=True)


def test_09_determinism(tmp_path, capsys):
    with criterion(9, "test/simulate reports byte-identical across workers 1, 4, 8", 120) as info:
        rng = np.random.default_rng(909)
        lines = ["pop,x,y,value"] + [
            f"{'AB'[j % 2]},{rng.random()!r},{rng.random()!r},{rng.normal()!r}" for j in range(80)]
        csv = tmp_path / "d.csv"
        csv.write_text("\n".join(lines) + "\n")
        scen = tmp_path / "s.ini"
        scen.write_text("n_i = 25, 25\nfield_model = moving_average\nfield_range = 0.2\nseed = 9\n")
        runs = {
            "test-perm": ["test", "--input", str(csv), "--method", "perm", "--B", "1000", "--seed", "7"],
            "test-boot": ["test", "--input", str(csv), "--method", "block-boot", "--block-side", "0.3",
                          "--B", "200", "--seed", "7"],
            "simulate": ["simulate", "--scenario", str(scen), "--trials", "6", "--B", "50", "--seed", "3"],
        }
        for name, args in runs.items():
            outs = []
            for workers in ("1", "4", "8"):
                for _ in range(2 if workers == "1" else 1):
                    assert main(args + ["--workers", workers]) == 0
                    outs.append(_strip(capsys.readouterr().out))
            assert len(set(outs)) == 1, name
        info["detail"] = f"{len(runs)} invocations x 4 runs identical"


def test_10_bootstrap_calibration():
    with criterion(10, "null-enforced block bootstrap size in [0.02, 0.09] (correlated S0)", 900) as info:
        sc = ScenarioSpec(n_i=(50, 50), field_model="moving_average", field_range=0.2, seed=1010)
        boot = TestConfig(replicates=200, method="block_bootstrap", seed=1011)
        perm = TestConfig(replicates=200, seed=1011)
        rb = monte_carlo_rejection_rate(sc, boot, 300)
        rp = monte_carlo_rejection_rate(sc, perm, 300)
        info["detail"] = f"bootstrap={rb.rate:.3f} (auto block side) permutation={rp.rate:.3f} (no bound)"
        assert 0.02 <= rb.rate <= 0.09
