"""Acceptance checks. Each test records a PASS/FAIL line that conftest prints at the end.

Criteria 7-9 read a benchmark report made from a trained checkpoint (see README).
Point ``HYBRIDSEG_REPORT`` at it; without one those three are reported as NOT RUN.
"""
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import fd_check, linear_gaussian_evidence, linear_gaussian_model, record
from oracles import brute_force, random_instance
from hybridseg import kernels
from hybridseg.latent_ode import (LatentOdeModel, Posterior, batch_loss, decode, encode,
                                  importance_log_weights, log_mean_exp, make_batch, sine_config,
                                  standard_error_of_log_mean)
from hybridseg.metrics import f1_score, hausdorff, rand_index, rand_index_pairs
from hybridseg.numerics import GruParams, MlpParams, gru_cell_step, init_gru, init_mlp, mlp_forward
from hybridseg.numerics import tensor as T
from hybridseg.ode import SolverConfig, ode_solve
from hybridseg.segmentation import GaussianMeanMarginalCost, PeltConfig, pelt_segment

REPORT = Path(os.environ.get("HYBRIDSEG_REPORT",
                             Path(__file__).resolve().parents[2] / "runs" / "bench" / "report.json"))
K_GRID = [10.0, 25.0, 50.0, 100.0, 200.0]


def check(n, ok, detail):
    record(n, ok, detail)
    assert ok, detail


# 1 ------------------------------------------------------------------------

def test_c1_exact_search_matches_enumeration():
    rng = np.random.default_rng(2024)
    start, bad, total = time.perf_counter(), [], 0
    for kind in ("norm", "rbf", "ar", "table"):
        for _ in range(25):
            n = int(rng.integers(5, 15))
            beta = float(rng.choice([0.0, 0.5, 1.0, 3.0]))
            values, cost, table = random_instance(kind, rng, n)
            m = max(int(rng.integers(1, 4)), cost.min_size)
            if m > n:
                m = cost.min_size
            ref = brute_force(table, n, beta, m)
            seg = pelt_segment(values, None, cost, PeltConfig(beta=beta, K=math.inf, min_size=m,
                                                              time_decimals=None))
            total += 1
            if (seg.objective, seg.changepoints) != ref:
                bad.append((kind, n, beta, m))
    secs = time.perf_counter() - start
    check(1, not bad and total == 100 and secs < 60,
          f"{total - len(bad)}/{total} exact matches in {secs:.1f}s")


# 2 ------------------------------------------------------------------------

def _grad_model():
    cfg = sine_config(gru_units=6, enc_field_hidden=(7,), latent_field_hidden=(8,),
                      decoder_hidden=(9,), latent_dim=3, enc_hidden=4,
                      latent_solver=SolverConfig("rk4", step_size=0.05))
    return LatentOdeModel.initialize(cfg, 5)


def test_c2_gradient_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    errs = {}

    mlp = init_mlp(rng, [3, 12, 2], ["tanh", "identity"])
    x = rng.uniform(-2, 2, (4, 3))
    errs["mlp"] = fd_check(lambda p: T.sum(T.square(mlp_forward(
        MlpParams.from_named(p, "f", mlp.activations), x))), mlp.named("f"))

    g = init_gru(rng, 2, 3, 5)
    xs = rng.uniform(-2, 2, (3, 2))

    def gru_fn(p):
        cell, h = GruParams.from_named(p, "g", 2, 3, 5), np.zeros(3)
        for xi in xs:
            h = gru_cell_step(cell, h, xi)
        return T.sum(h * np.array([1.0, -2.0, 0.5]))
    errs["gru"] = fd_check(gru_fn, g.named("g"))

    m = _grad_model()
    t = np.sort(rng.uniform(0, 2, 6))
    v = np.sin(2 * t)[:, None]
    enc_keys = [k for k in m.params if k.split(".")[0] in ("enc_gru", "enc_field", "head")]

    def enc_fn(p):
        post = encode(m, v, t, dict(m.params, **p))
        return T.sum(post.mean) + T.sum(T.log(post.std))
    errs["encode"] = fd_check(enc_fn, {k: m.params[k] for k in enc_keys}, n_coords=8, rng=rng)

    dec = {k: a for k, a in m.params.items() if k.split(".")[0] in ("latent_field", "decoder")}
    dec["z0"] = np.array([0.3, -0.2, 0.9])

    def dec_fn(p):
        full = dict(m.params, **{k: a for k, a in p.items() if k != "z0"})
        return T.sum(T.square(decode(m, p["z0"], [0.0, 0.4, 1.2], m.config.latent_solver,
                                     full) - 0.5))
    errs["decode"] = fd_check(dec_fn, dec, n_coords=8, rng=rng)

    batch = make_batch([(t, v), (t[:4], v[:4] + 0.1)], time_decimals=None)
    errs["elbo"] = fd_check(
        lambda p: batch_loss(m, dict(m.params, **p), batch, 0.7, np.random.default_rng(1), 2,
                             m.config.latent_solver)[0],
        m.params, n_coords=10, rng=rng)
    secs = time.perf_counter() - start
    limits = {"mlp": 1e-4, "gru": 1e-4, "encode": 1e-3, "decode": 1e-3, "elbo": 1e-3}
    ok = all(errs[k] <= limits[k] for k in limits) and secs < 300
    check(2, ok, " ".join(f"{k}={e:.1e}" for k, e in errs.items()) + f" in {secs:.1f}s")


# 3 ------------------------------------------------------------------------

def test_c3_ode_accuracy():
    sol = ode_solve(lambda t, y: y, np.array([1.0]), [0.0, 1.0], SolverConfig(rtol=1e-8, atol=1e-8))
    err_e = abs(sol.states[-1, 0] - math.e)
    a, b, d, g = 1.0, 1.0, 2.0, 1.0
    times = np.linspace(0, 15, 301)

    def lv(t, s):
        return np.array([a * s[0] - b * s[0] * s[1], d * s[0] * s[1] - g * s[1]])

    drifts = []
    for states in (ode_solve(lv, np.array([2.0, 1.0]), times, SolverConfig(rtol=1e-8, atol=1e-8)).states,
                   kernels.lv_solve((a, b, d, g), [2.0, 1.0], times, 1e-8, 1e-8)[0]):
        x, y = states[:, 0], states[:, 1]
        inv = d * x - g * np.log(x) + b * y - a * np.log(y)
        drifts.append(float(np.max(np.abs(inv - inv[0])) / abs(inv[0])))
    check(3, err_e <= 1e-6 and max(drifts) <= 1e-5,
          f"|y(1)-e|={err_e:.1e} invariant drift={max(drifts):.1e}")


# 4 ------------------------------------------------------------------------

def test_c4_importance_sampled_evidence():
    var, x = 0.5, 1.3
    m = linear_gaussian_model(var)
    truth = linear_gaussian_evidence(x, var)
    # deliberately not the exact posterior (mean 0.867, std 0.577)
    post = Posterior(np.array([0.4]), np.array([0.9]))
    inside, medians = 0, []
    for M in (100, 1000, 10_000):
        errs = []
        for seed in range(20):
            lw = importance_log_weights(m, [[x]], [0.0], M, np.random.default_rng(seed), post)
            est = log_mean_exp(lw)
            errs.append(abs(est - truth))
            if M == 10_000:
                inside += abs(est - truth) <= 3 * standard_error_of_log_mean(lw)
        medians.append(float(np.median(errs)))
    mono = all(b <= a for a, b in zip(medians, medians[1:]))
    check(4, inside == 20 and mono,
          f"{inside}/20 seeds within 3 SE; median |err| " + " ".join(f"{e:.4f}" for e in medians))


# 5 ------------------------------------------------------------------------

def occam_instance(seed):
    """Three constant segments, n=90, each at least 20 long, jumps of 3-6 noise sd."""
    rng = np.random.default_rng(seed)
    a = int(rng.integers(20, 51))
    b = int(rng.integers(a + 20, 71))
    levels = [rng.uniform(-5, 5)]
    for _ in range(2):
        levels.append(levels[-1] + rng.choice([-1, 1]) * rng.uniform(3, 6))
    mean = np.repeat(levels, [a, b - a, 90 - b])
    return (mean + rng.normal(0, 1, 90))[:, None], (a - 1, b - 1)


def test_c5_no_oversegmentation_without_penalty():
    cost = GaussianMeanMarginalCost(noise_std=1.0, prior_std=5.0)
    hits, loose = 0, 0
    for seed in range(20):
        x, _ = occam_instance(seed)
        hits += abs(len(pelt_segment(x, None, cost, PeltConfig()).changepoints) - 2) <= 1
        # not gated: with single-point segments allowed, noise runs can win their own segment
        loose += abs(len(pelt_segment(x, None, cost, PeltConfig(min_size=1)).changepoints) - 2) <= 1
    check(5, hits >= 18, f"{hits}/20 seeds within +-1 at default min_size "
                         f"(diagnostic, min_size=1: {loose}/20)")


# 6 ------------------------------------------------------------------------

def test_c6_metric_oracles():
    rng = np.random.default_rng(6)
    rand_ok = 0
    for _ in range(500):
        n = int(rng.integers(2, 201))
        a, b = (sorted(rng.choice(n - 1, int(rng.integers(0, min(6, n - 1) + 1)),
                                  replace=False).tolist()) for _ in range(2))
        rand_ok += rand_index(a, b, n) == rand_index_pairs(a, b, n)
    haus = [([50], [50], 0.0), ([50], [40, 90], 40.0), ([10, 90], [15], 75.0)]
    f1 = [([20, 60], [20, 60], 1.0), ([100], [105], 1.0), ([100], [50, 105], 2 / 3),
          ([100], [111], 0.0), ([], [], 1.0), ([10], [], 0.0)]
    h_ok = all(hausdorff(t, p) == (e, True) for t, p, e in haus) and hausdorff([], [1])[1] is False
    f_ok = all(math.isclose(f1_score(t, p), e, abs_tol=1e-15) for t, p, e in f1)
    check(6, rand_ok == 500 and h_ok and f_ok,
          f"rand {rand_ok}/500 exact; hausdorff table {'ok' if h_ok else 'MISMATCH'}; "
          f"f1 table {'ok' if f_ok else 'MISMATCH'}")


# 7-9 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def report():
    if not REPORT.is_file():
        return None
    return json.loads(REPORT.read_text())


def _need(report, n):
    if report is None:
        record(n, None, f"no benchmark report at {REPORT}")
        pytest.skip("benchmark report not available")


def _agg(report, method, scope):
    for a in report["aggregates"]:
        if a["method"] == method and a["scope"] == scope:
            return a
    return None


def test_c7_sine_reproduction(report):
    _need(report, 7)
    a = _agg(report, "latseg", "all")
    n_test = sum(r["method"] == "latseg" for r in report["rows"])
    ok = n_test == 75 and a["rand_index"] >= 0.65 and a["f1"] >= 0.55
    check(7, ok, f"rand={a['rand_index']:.3f} f1={a['f1']:.3f} over {n_test} test trajectories")


def test_c8_beats_known_k_baselines(report):
    _need(report, 8)
    # baselines are only run where the truth has changepoints, so compare on that subset
    mine = _agg(report, "latseg", "with_changepoints")["rand_index"]
    others = {m: _agg(report, m, "with_changepoints") for m in ("rbf", "ar", "norm")}
    ok = all(o is not None and mine > o["rand_index"] for o in others.values())
    check(8, ok, f"latseg={mine:.3f} " + " ".join(
        f"{m}={o['rand_index']:.3f}" if o else f"{m}=missing" for m, o in others.items()))


def test_c9_monotone_in_k(report):
    _need(report, 9)
    sweep = sorted((s for s in report["k_sweep"] if s["K"] != "inf" and float(s["K"]) in K_GRID),
                   key=lambda s: float(s["K"]))
    if [float(s["K"]) for s in sweep] != K_GRID:
        check(9, False, f"k_sweep does not cover {K_GRID}")
    obj = np.array([s["objectives"] for s in sweep])
    pru = np.array([s["pruned_counts"] for s in sweep])
    obj_bad = int(np.sum(np.any(np.diff(obj, axis=0) > 0, axis=0)))
    pru_bad = int(np.sum(np.any(np.diff(pru, axis=0) > 0, axis=0)))
    sums = obj.sum(axis=1)
    agg_ok = bool(np.all(np.diff(sums) <= 0) and np.all(np.diff(pru.sum(axis=1)) <= 0))
    check(9, obj_bad == 0 and pru_bad == 0 and agg_ok,
          f"{obj.shape[1]} trajectories; objective violations {obj_bad}, pruned-count "
          f"violations {pru_bad}; objective sums " + " ".join(f"{v:.2f}" for v in sums))
