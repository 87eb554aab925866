"""Acceptance suite. Each test is one criterion; the summary prints PASS/FAIL per criterion."""

import json
import time

import numpy as np
import pytest

from oracles import order_stat_samples
from timelyfl import cli_io
from timelyfl.age_model import ApproxParams, SystemParams, age_approx, age_exact
from timelyfl.cli import main
from timelyfl.fl_bench import FLConfig, mse, mse_grad, train
from timelyfl.order_stats import exp_order_mean, exp_order_var, harmonic_prefix_identity
from timelyfl.protocol_sim import SchemeKind, compare_iteration_time, simulate
from timelyfl.sweep_opt import reproduce_figure


def P(n, m, k, lam=1.0, mu=1.0, c=1.0):
    return SystemParams(n, m, k, lam, mu, c)


def note(record_property, text):
    record_property("detail", text)


SIM_SETS = [
    P(100, 20, 10, 1.0, 1.0, 1.0),
    P(100, 40, 10, 0.5, 1.0, 1.0),
    P(100, 40, 31, 1.0, 0.5, 1.0),
    P(100, 90, 79, 1.0, 1.0, 1.0),
    P(100, 90, 79, 0.5, 0.5, 5.0),
    P(100, 90, 31, 1.0, 1.0, 5.0),
    P(100, 20, 10, 0.5, 0.5, 5.0),
    P(100, 40, 31, 0.5, 1.0, 5.0),
    P(100, 90, 10, 1.0, 0.5, 1.0),
    P(100, 40, 10, 1.0, 1.0, 5.0),
]


@pytest.mark.criterion(1, "simulated age vs exact age, 10 sets, <1%, <60 s each")
def test_c01_simulation_agreement(record_property):
    worst_err, worst_time = 0.0, 0.0
    errs = []
    for i, p in enumerate(SIM_SETS):
        t0 = time.perf_counter()
        r = simulate(p, "earliest", 100_000, seed=1000 + i)
        worst_time = max(worst_time, time.perf_counter() - t0)
        err = abs(r.mean_avg_age - age_exact(p).total) / age_exact(p).total
        errs.append(err)
        worst_err = max(worst_err, err)
    note(record_property, f"max rel err {worst_err:.4%}, slowest set {worst_time:.2f} s")
    assert worst_err < 0.01, errs
    assert worst_time < 60.0


def _check_family(record_property, figure, ref_m, ref_k):
    curves = reproduce_figure(figure, 100)
    found, gaps = [], []
    for c, pm, pk in zip(curves, ref_m, ref_k):
        kw = dict(n=100, m=pm, k=pk, lam=1.0, mu_up=1.0, c=1.0)
        kw[c.parameter] = c.value
        ref_age = age_exact(SystemParams(**kw)).total
        found.append((c.optimum.m, c.optimum.k))
        gaps.append(ref_age / c.optimum.age - 1.0)
    note(record_property, f"found {found}; max age gap {max(gaps):.4%}")
    assert len(curves) == len(ref_m)
    for (m, k), pm, pk in zip(found, ref_m, ref_k):
        assert abs(m - pm) <= 2 and abs(k - pk) <= 2, (found, ref_m, ref_k)
    assert max(gaps) <= 0.002


@pytest.mark.criterion(2, "optimal (m,k) versus uplink rate")
def test_c02_fig3(record_property):
    _check_family(record_property, "fig3", (95, 94, 92, 90, 86), (55, 64, 74, 79, 83))


@pytest.mark.criterion(3, "optimal (m,k) versus availability rate")
def test_c03_fig4(record_property):
    _check_family(record_property, "fig4", (72, 79, 86, 90, 97), (69, 75, 78, 79, 78))


@pytest.mark.criterion(4, "optimal (m,k) versus compute time")
def test_c04_fig5(record_property):
    _check_family(record_property, "fig5", (85, 90, 96, 97), (70, 79, 91, 94))


@pytest.mark.criterion(5, "optimal k for fixed m, m=80 best")
def test_c05_fig6(record_property):
    curves = reproduce_figure("fig6", 100)
    ms = [c.value for c in curves]
    ks = [c.optimum.k for c in curves]
    ages = [c.optimum.age for c in curves]
    best_m = ms[int(np.argmin(ages))]
    note(record_property, f"k*={ks}; best m={best_m}")
    assert ms == [20, 40, 60, 80, 100]
    assert all(abs(k - pk) <= 2 for k, pk in zip(ks, (15, 31, 48, 68, 93)))
    assert best_m == 80


@pytest.mark.criterion(6, "iteration time improvement over random k")
def test_c06_fig7(record_property):
    base = compare_iteration_time(P(100, 20, 10), 50_000, seed=7)
    fast = compare_iteration_time(P(100, 20, 10, lam=1e6), 50_000, seed=7)
    y = base.mean_iteration_time
    imp, imp_fast = base.improvement_over_random, fast.improvement_over_random
    note(record_property, f"improvement {imp:.2%} at lam=1, {imp_fast:.2%} at lam=1e6")
    assert abs(imp - 0.72) <= 0.05
    assert imp_fast > 0.50
    assert y[SchemeKind.EARLIEST_K_OF_M] < y[SchemeKind.FIRST_K] < y[SchemeKind.RANDOM_K]


@pytest.mark.criterion(7, "order statistic moments vs Monte Carlo; harmonic identity")
def test_c07_order_statistics(record_property):
    worst_mean, worst_var = 0.0, 0.0
    for n, orders in ((10, (1, 5, 10)), (100, (79,))):
        samples = order_stat_samples(n, orders, 1_000_000, seed=99 + n)
        for i in orders:
            x = samples[i]
            worst_mean = max(worst_mean, abs(x.mean() / exp_order_mean(i, n, 1.0) - 1))
            worst_var = max(worst_var, abs(x.var(ddof=1) / exp_order_var(i, n, 1.0) - 1))
    ident = 0.0
    for k in (1, 2, 10, 1000, 50_000, 100_000):
        lhs, rhs = harmonic_prefix_identity(k)
        ident = max(ident, abs(lhs - rhs) / rhs)
    note(record_property, f"mean err {worst_mean:.3%}, var err {worst_var:.3%}, identity {ident:.1e}")
    assert worst_mean < 0.005 and worst_var < 0.02
    assert ident < 1e-9


@pytest.mark.criterion(8, "approximation error shrinks with n")
def test_c08_approximation(record_property):
    approx = age_approx(ApproxParams(0.9, 0.878), 1.0, 1.0, 1.0)
    errs = []
    for n in (100, 1000, 10_000):
        m = round(0.9 * n)
        k = round(0.878 * m)
        exact = age_exact(P(n, m, k)).total
        errs.append(abs(approx - exact) / exact)
    note(record_property, "rel errors " + ", ".join(f"{e:.3%}" for e in errs))
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.criterion(9, "inter-delivery count moments")
def test_c09_geometric(record_property):
    r = simulate(P(100, 20, 10), "earliest", 100_000, seed=21)
    mean, second = r.empirical_inter_delivery_moments
    p = 0.1
    note(record_property, f"mean {mean:.4f} (10), second {second:.3f} ({(2 - p) / p**2:.0f})")
    assert abs(mean / 10.0 - 1) < 0.01
    assert abs(second / ((2 - p) / p**2) - 1) < 0.02


@pytest.mark.criterion(10, "federated training convergence and scheme agreement")
def test_c10_fl(record_property):
    final = {}
    for k in (10, 31, 40):
        h = train(FLConfig(k=k, m=40, scheme="earliest"))
        assert np.all(np.isfinite(h.test_runs))
        assert np.all(h.test_runs[:, -1] < 0.01 * h.test_runs[:, 0])
        final[k] = (h.test_loss[-1], h.final_test_std)
    r = train(FLConfig(k=10, m=40, scheme="random"))
    e_loss, e_std = final[10]
    gap = abs(e_loss - r.test_loss[-1])
    tol = max(e_std, r.final_test_std)

    full = train(FLConfig(k=100, m=100, noise_std=0.0, repeats=1))
    monotone = bool(np.all(np.diff(full.train_loss) <= 0))

    rng = np.random.default_rng(5)
    fd_err = 0.0
    for _ in range(50):
        d, n = rng.integers(1, 11), rng.integers(1, 30)
        x, y, w = rng.standard_normal((n, d)), rng.standard_normal(n), rng.standard_normal(d)
        h_ = 1e-6
        fd = np.array([(mse(w + h_ * e, x, y) - mse(w - h_ * e, x, y)) / (2 * h_) for e in np.eye(d)])
        g = mse_grad(w, x, y)
        fd_err = max(fd_err, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))

    note(record_property,
         "final test loss " + ", ".join(f"k={k}: {v[0]:.4f}" for k, v in final.items())
         + f"; earliest-random gap {gap:.4f} <= {tol:.4f}; monotone {monotone}; fd rel err {fd_err:.1e}")
    assert gap <= tol
    assert monotone
    assert fd_err < 1e-5


def _payload(argv, path):
    assert main([str(a) for a in argv] + ["--json", str(path)]) == 0
    return cli_io.dumps(json.loads(path.read_text())["payload"]).encode()


@pytest.mark.criterion(11, "same seed gives byte-identical payloads")
def test_c11_determinism(record_property, tmp_path, capsys):
    commands = {
        "simulate": ["simulate", "--n", 100, "--m", 20, "--k", 10, "--scheme", "all",
                     "--iterations", 20_000, "--seed", 42],
        "sweep": ["sweep", "--n", 100],
        "sweep-simulated": ["sweep", "--n", 20, "--objective", "simulated", "--sim-iterations",
                            2000, "--sweep-m", "10,20", "--sweep-k", "5,10", "--seed", 42],
        "fl-train": ["fl-train", "--iterations", 30, "--repeats", 2, "--k", "10", "--m", 40,
                     "--schemes", "earliest,random", "--seed", 42],
    }
    same = {}
    for name, argv in commands.items():
        argv = argv + ["--out-dir", tmp_path / name]
        a = _payload(argv, tmp_path / f"{name}-a.json")
        b = _payload(argv, tmp_path / f"{name}-b.json")
        same[name] = a == b
    capsys.readouterr()
    note(record_property, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert all(same.values())
