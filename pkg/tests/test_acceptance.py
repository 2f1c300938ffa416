"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (also collected in the terminal
summary) and then asserts the same condition.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from lgelu.activation import lambda_gelu, relu
from lgelu.gate_math import gate_l1_error, lambda_target_for
from lgelu.harness import runner
from lgelu.harness.config import DatasetConfig, GridSpec, TrainConfig
from lgelu.harness.runner import PHASE_ANNEAL, run_grid, run_substitution_study, run_training
from lgelu.network import backward, build_network, cross_entropy_batch, forward
from lgelu.reparam import HardnessParam, dlambda_ds, lambda_from_s, s_for_lambda
from lgelu.schedule import AnnealPlan, lambda_at

from oracles import central_diff, grads_close, numeric_gradients, quad_gate_l1
from test_reparam import _relative_step_discrepancy


def test_gradient_fidelity(criterion):
    start = time.perf_counter()
    worst = max_abs = 0.0
    ok = True
    for seed in (0, 1, 2):
        rng = np.random.default_rng(100 + seed)
        t = (0.1, 0.3, 0.9)[seed]
        net = build_network([4, 16, 16, 16, 16, 3], rng, t=t)
        for layer in net.layers:
            layer.bias[...] = rng.normal(scale=0.3, size=layer.bias.shape)
        lams = np.concatenate([[1.0001, 20.0], rng.uniform(1.0001, 20.0, 2)])
        for p, lam in zip(net.hardness, lams):
            p.s = s_for_lambda(lam, t)
        x = rng.normal(size=(8, 4))
        y = rng.integers(0, 3, 8)
        logits, cache = forward(net, x)
        grads = backward(net, cache, cross_entropy_batch(logits, y)[1])
        nw, nb, ns = numeric_gradients(net, x, y, h=1e-5)
        for a, n in zip(grads.weights + grads.biases + [grads.s], nw + nb + [ns]):
            good, _ = grads_close(a, n, rel=1e-5, abs_tol=1e-8)
            ok &= good
            diff = np.abs(np.asarray(a) - np.asarray(n))
            scale = np.maximum(np.abs(a), np.abs(n))
            max_abs = max(max_abs, float(diff.max()))
            big = scale > 1e-3
            if np.any(big):
                worst = max(worst, float(np.max(diff[big] / scale[big])))
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    criterion(1, "gradient fidelity", ok, f"max abs diff {max_abs:.1e}, worst rel err where |g| > 1e-3 {worst:.1e}, {elapsed:.1f}s")
    assert ok


def test_closed_form_bound(criterion):
    start = time.perf_counter()
    errs = {lam: abs(gate_l1_error(lam) - quad_gate_l1(lam)) for lam in (1, 2, 5, 10, 50, 160)}
    target = lambda_target_for(5e-3)
    elapsed = time.perf_counter() - start
    ok = max(errs.values()) < 1e-6 and 159.5 <= target <= 159.7 and elapsed < 5
    criterion(2, "closed-form gate error bound", ok,
              f"max |closed - quad| {max(errs.values()):.1e}, target {target:.4f}, {elapsed:.1f}s")
    assert ok


def test_relu_limit(criterion):
    start = time.perf_counter()
    x = np.linspace(-6.0, 6.0, 12001)  # step 1e-3
    sup = [float(np.max(np.abs(lambda_gelu(x, lam) - relu(x)))) for lam in (1, 4, 16, 64, 160)]
    elapsed = time.perf_counter() - start
    ok = sup[-1] < 0.003 and all(b < a for a, b in zip(sup, sup[1:])) and elapsed < 5
    criterion(3, "ReLU-limit convergence", ok,
              "sup errors " + ", ".join(f"{v:.2e}" for v in sup) + f", {elapsed:.2f}s")
    assert ok


def test_constraint_and_reparam(criterion):
    rng = np.random.default_rng(2024)
    n = 1_000_000
    # wide magnitudes: s = sign * 10^k for k in [-6, 6], plus exact zeros
    s = rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(-6, 6, n)
    s[:1000] = 0.0
    t = rng.choice([0.1, 0.3, 0.6, 0.9], n)
    lam = lambda_from_s(s, t)
    above = bool(np.all(lam > 1.0) and np.all(np.isfinite(lam)))

    trip = 0.0
    for tt in (0.1, 0.3, 0.6, 0.9):
        for target in np.concatenate([1 + np.geomspace(1e-6, 1.0, 300), np.geomspace(2.0, 1e4, 300)]):
            back = float(lambda_from_s(s_for_lambda(target, tt), tt))
            trip = max(trip, abs(back - target) / target)

    fd_err = 0.0
    for tt in (0.1, 0.3, 0.9):
        for s0 in np.linspace(-3.0, 3.0, 41):
            analytic = dlambda_ds(HardnessParam(s0, tt))
            fd = central_diff(lambda u: math.log1p(math.exp(u / tt)), s0, 1e-5 * tt)
            fd_err = max(fd_err, abs(fd - analytic) / abs(analytic))
    ok = above and trip < 1e-9 and fd_err < 1e-6
    criterion(4, "constraint and reparameterization", ok,
              f"lambda>1 on 1e6 samples: {above}, round trip {trip:.1e}, dlambda/ds fd {fd_err:.1e}")
    assert ok


def test_effective_step_law(criterion):
    ratios = []
    for s0 in (-1.0, 0.0, 1.0):
        for t in (0.1, 0.3):
            rng = np.random.default_rng(11)
            net = build_network([3, 5, 2], rng, t=t)
            x = rng.normal(size=(16, 3))
            y = rng.integers(0, 2, 16)
            net.hardness[0].s = s0
            logits, cache = forward(net, x)
            gs = backward(net, cache, cross_entropy_batch(logits, y)[1]).s[0]
            lr = 0.05 * t / abs(gs)
            d_full, _ = _relative_step_discrepancy(s0, t, lr, net, x, y)
            d_half, _ = _relative_step_discrepancy(s0, t, lr / 2, net, x, y)
            ratios.append(d_full / d_half)
    ok = all(1.6 <= r <= 2.4 for r in ratios)
    criterion(5, "effective-step law", ok, "ratios " + ", ".join(f"{r:.3f}" for r in ratios))
    assert ok


def test_annealing_exactness(criterion, monkeypatch):
    s_log = []
    real_apply = runner.apply_phase

    def logging_apply(plan, net, epoch):
        s_log.append((epoch, [p.s for p in net.hardness]))
        real_apply(plan, net, epoch)

    monkeypatch.setattr(runner, "apply_phase", logging_apply)
    target = lambda_target_for(5e-3)
    cfg = TrainConfig(dataset=DatasetConfig(n_samples=150), layer_sizes=[2, 8, 8, 8, 8, 2],
                      epochs=12, seeds=[0], init_mode="increasing", anneal={"enabled": True})
    res = run_training(cfg, 0)
    rec, plan = res.record, res.plan
    es = rec.switch_epoch
    # s after epoch e is what apply_phase sees at the start of epoch e + 1
    s_after = {e - 1: s for e, s in s_log}
    s_after[12] = [p.s for p in res.final_net.hardness]
    frozen_s = [np.float64(v).tobytes() for v in s_after[es]]
    bitwise = all([np.float64(v).tobytes() for v in s_after[e]] == frozen_s for e in range(es, 13))
    learned = s_after[1] != s_after[es]
    endpoint = rec.profile_at(12).lambdas == [target] * 4
    start = plan.captured_lambdas
    mid_err = 0.0
    ramp_exact = True
    for i in range(4):
        ramp = {es: start[i], **{e: rec.profile_at(e).lambdas[i] for e in range(es + 1, 13)}}
        ramp_exact &= all(ramp[e] == lambda_at(plan, i, e) for e in range(es + 1, 13))
        for k in range(0, 12 - es + 1):
            pair_mid = 0.5 * (ramp[es + k] + ramp[12 - k])
            mid_err = max(mid_err, abs(pair_mid - 0.5 * (start[i] + target)))
    # whole-epoch midpoint on a 75-epoch window: captured 2, target 160 -> 33.6 at 15 epochs in
    example = lambda_at(AnnealPlan(100, 25, 160.0, [2.0]), 0, 40)
    mid_ok = mid_err <= 4 * np.spacing(target) and abs(example - 33.6) <= 4 * np.spacing(33.6)
    phases_ok = rec.phases[es:] == [PHASE_ANNEAL] * (12 - es) and es == 3
    ok = endpoint and bitwise and learned and ramp_exact and mid_ok and phases_ok
    criterion(6, "annealing schedule exactness", ok,
              f"e_s={es}, endpoint exact {endpoint}, s bitwise frozen {bitwise}, "
              f"midpoint err {mid_err:.1e}")
    assert ok


@pytest.mark.slow
def test_substitution_pattern(criterion):
    start = time.perf_counter()
    cfg = TrainConfig(seeds=[0, 1, 2], epochs=40, anneal={"epsilon": 5e-3})
    assert cfg.dataset.n_samples == 600 and len(cfg.layer_sizes) == 6
    rows, _ = run_substitution_study(cfg, relu_control=False)
    gaps = {(r.mode, r.seed): abs(r.gap) for r in rows}
    annealed = [gaps["lambda_gelu", s] for s in cfg.seeds]
    direct = [gaps["gelu", s] for s in cfg.seeds]
    elapsed = time.perf_counter() - start
    a_ok = max(annealed) <= 0.01
    b_ok = all(d >= a for d, a in zip(direct, annealed)) and np.mean(direct) >= np.mean(annealed)
    ok = a_ok and b_ok and elapsed < 120
    criterion(7, "substitution study pattern", ok,
              "annealed gaps " + ", ".join(f"{g:.3f}" for g in annealed)
              + "; direct gaps " + ", ".join(f"{g:.3f}" for g in direct) + f"; {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_drift_monotonicity(criterion):
    start = time.perf_counter()
    grid = GridSpec(t_values=[0.1, 0.9], c_values=[1.0, 9.0], base=TrainConfig(seeds=[0, 1, 2]))
    result = run_grid(grid)
    d = {(r.t, r.c): r.drift for r in result.rows}
    elapsed = time.perf_counter() - start
    table = "; ".join(f"t={t} c={c:g}: {d[t, c]:.4f}" for t, c in sorted(d))
    ok = (all(r.status == "ok" and r.n_runs == 9 for r in result.rows)
          and all(d[t, 9.0] > d[t, 1.0] for t in (0.1, 0.9))
          and all(d[0.1, c] > d[0.9, c] for c in (1.0, 9.0))
          and elapsed < 300)
    criterion(8, "drift monotonicity in c and t", ok, f"{table}; {elapsed:.0f}s")
    assert ok


def test_metric_suite(criterion):
    """Runs the metric fixtures and the brute-force BVS scan as one criterion."""
    import test_metrics as tm

    tm.test_spearman_fixtures()
    tm.test_drift_fixtures()
    tm.test_cell_average()
    for direction in ("higher", "lower"):
        tm.test_bvs_matches_brute_force(direction)
    criterion(9, "metric unit suite", True, "spearman 1/-1/0.8, drift 3 and 0.9, 2x1000 BVS curves")


GRID_CFG = """
epochs = 6
layer_sizes = [2, 8, 8, 8, 8, 2]
seeds = [0, 1]
dataset.n_samples = 120

[grid]
t_values = [0.1, 0.9]
c_values = [1.0, 9.0]
"""


def _cli_grid(cfg_path, out, jobs):
    env = dict(os.environ)
    src = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    subprocess.run([sys.executable, "-m", "lgelu", "grid", "--config", str(cfg_path),
                    "--out", str(out), "--jobs", str(jobs)],
                   check=True, env=env, capture_output=True)
    files = {}
    for root, _, names in os.walk(out):
        for name in names:
            path = os.path.join(root, name)
            with open(path, "rb") as fh:
                files[os.path.relpath(path, out)] = fh.read()
    return files


def test_grid_determinism(criterion, tmp_path):
    cfg = tmp_path / "grid.cfg"
    cfg.write_text(GRID_CFG)
    first = _cli_grid(cfg, tmp_path / "a", 1)
    second = _cli_grid(cfg, tmp_path / "b", 2)
    csvs = sorted(k for k in first if k.endswith(".csv"))
    same = first.keys() == second.keys() and all(first[k] == second[k] for k in first)
    # 2 baseline runs, 4 cells x 3 modes x 2 seeds, summary, grid, correlations
    ok = same and len(csvs) == 2 + 4 * 3 * 2 + 3
    criterion(10, "grid determinism", ok, f"{len(csvs)} CSV files byte-identical: {same}")
    assert ok
