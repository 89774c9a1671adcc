"""Acceptance suite: one PASS/FAIL line per criterion.

The lines are printed in the pytest terminal summary (see conftest.py) and
also when the file is run directly with ``python tests/test_acceptance.py``.
"""

import math
import statistics
import time

import numpy as np
import pytest

from p2p.cli import main
from p2p.evaluation import evaluate
from p2p.kinematics import InterceptorSpec, critical_distance, reach_time
from p2p.predictors import BASELINES, ModelPredictor, predict_naive_velocity
from p2p.synth import SynthSpec, generate_dataset
from p2p.tokenizer import TokenizerConfig, final_window, make_examples, n_windows, tokenize
from p2p.training import LossWeights, TrainConfig, loss_behavior, loss_drone, loss_traj, total_loss, train
from p2p.transformer import ModelConfig, forward, hidden_states, init_params

from conftest import make_track
from gradcheck import max_relative_errors
from oracles import simulate_reach_times

RESULTS: dict[int, tuple[str, str]] = {}


def report(n: int, ok: bool, detail: str, status: str | None = None) -> None:
    status = status or ("PASS" if ok else "FAIL")
    RESULTS[n] = (status, detail)
    print(f"criterion {n:2d}: {status}  {detail}")
    assert ok, detail


def test_criterion_01_reach_time_oracle():
    rng = np.random.default_rng(2024)
    ds = rng.uniform(0, 200, 100)
    spec = InterceptorSpec(15.0, 5.0)
    t0 = time.perf_counter()
    sim = simulate_reach_times(ds, 15.0, 5.0, dt=1e-4)
    closed = np.array([reach_time(spec, d) for d in ds])
    elapsed = time.perf_counter() - t0
    err = float(np.abs(sim - closed).max())
    report(1, err <= 1e-2 and elapsed < 5.0, f"max |closed - sim| = {err:.2e} s (tol 1e-2), {elapsed:.2f} s")


def test_criterion_02_critical_distance():
    spec = InterceptorSpec(15.0, 5.0)
    d_c = critical_distance(spec)
    accel_branch = math.sqrt(2 * d_c / spec.a_max)
    cruise_branch = spec.v_max / spec.a_max + (d_c - d_c) / spec.v_max
    gap = abs(accel_branch - cruise_branch)
    jump = abs(reach_time(spec, math.nextafter(d_c, math.inf)) - reach_time(spec, d_c))
    ok = d_c == 22.5 and gap <= 1e-9 and jump <= 1e-9
    report(2, ok, f"d_c = {d_c!r} m, branch gap {gap:.1e}, step across d_c {jump:.1e}")


def test_criterion_03_table1_structure():
    spec = SynthSpec(n_tracks=50, drone_fraction=1.0, seed=3)
    examples = [e for t in generate_dataset(spec) for e in make_examples(t, TokenizerConfig())]
    rows = {k: evaluate(p, examples, name=k) for k, p in BASELINES.items()}
    frame_isr = rows["frame"].isr
    accs = {k: r.acc for k, r in rows.items()}
    ok = frame_isr == 1.0 and all(a == 0.0 for a in accs.values())
    report(3, ok, f"frame ISR = {frame_isr:.3f}, baseline acc = {accs} on {len(examples)} drone windows")


def test_criterion_04_gradient_gate():
    cfg = ModelConfig(d_model=16, layers=2, heads=4, window=8, horizon=5)
    t0 = time.perf_counter()
    errs = max_relative_errors(cfg, seed=0, batch=4, h=1e-5)
    elapsed = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = errs[worst] < 1e-4 and elapsed < 60
    report(4, ok, f"max rel err {errs[worst]:.2e} ({worst}) over {len(errs)} groups (tol 1e-4), {elapsed:.1f} s")


def test_criterion_05_causality():
    cfg = ModelConfig(d_model=32, layers=2, heads=4, window=12, horizon=5)
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params = init_params(cfg, seed)
        tokens = rng.normal(size=(12, 8)) * 10
        base = hidden_states(tokens, params, cfg)
        for t in range(12):
            pert = tokens.copy()
            pert[t] += rng.normal(size=8) * 10
            worst = max(worst, float(np.abs(hidden_states(pert, params, cfg)[:t] - base[:t]).max(initial=0.0)))
    report(5, worst <= 1e-12, f"max change at earlier positions {worst:.1e} over 20 seeds x 12 positions (tol 1e-12)")


@pytest.mark.slow
def test_criterion_06_synthetic_ordering():
    t0 = time.perf_counter()
    tracks = generate_dataset(SynthSpec(n_tracks=200, seed=42))
    examples = [e for t in tracks for e in make_examples(t, TokenizerConfig())]
    model_cfg = ModelConfig(d_model=64, layers=2)
    result = train(examples, model_cfg, TrainConfig(epochs=20, batch_size=64, seed=42))
    val = [examples[i] for i in result.val_idx]
    naive = evaluate(predict_naive_velocity, val, name="naive")
    p2p = evaluate(ModelPredictor(result.params, model_cfg), val, name="p2p")
    elapsed = time.perf_counter() - t0
    ok = p2p.ade < naive.ade and p2p.isr > naive.isr and p2p.acc >= 0.95 and elapsed < 15 * 60
    report(6, ok, f"ADE {p2p.ade:.2f} vs naive {naive.ade:.2f}; ISR {p2p.isr:.3f} vs {naive.isr:.3f}; "
                  f"acc {p2p.acc:.3f} (>= 0.95); n_val {len(val)}, {elapsed:.0f} s")


def test_criterion_07_tokenizer_conformance():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(500):
        length, W, H, step = int(rng.integers(2, 300)), int(rng.integers(1, 40)), int(rng.integers(1, 40)), int(rng.integers(1, 20))
        brute = sum(1 for off in range(0, length, step) if off + W + H <= length)
        mismatches += n_windows(length, W, H, step) != brute
    translation_ok = identity_ok = True
    for _ in range(50):
        xs = rng.integers(-500, 500, 30).astype(float)
        ys = rng.integers(-500, 500, 30).astype(float)
        dx, dy = (float(v) for v in rng.integers(-1000, 1000, 2))
        a = tokenize(make_track(xs, ys))
        b = tokenize(make_track(xs + dx, ys + dy))
        translation_ok &= bool(np.array_equal(a[:, 2:], b[:, 2:]))
        identity_ok &= all(a[t, 4] == xs[t] - 2 * xs[t - 1] + xs[t - 2] and a[t, 5] == ys[t] - 2 * ys[t - 1] + ys[t - 2]
                           for t in range(2, 30))
    ok = mismatches == 0 and translation_ok and identity_ok
    report(7, ok, f"window-count mismatches {mismatches}/500; translation exact {translation_ok}; "
                  f"second difference exact {identity_ok}")


def test_criterion_08_loss_values():
    bce = loss_drone(1.0, 0.5)
    ce = loss_behavior(0, np.full(5, 0.2))
    sl_small = loss_traj([[0.0, 0.0]], [[0.5, 0.0]])
    sl_large = loss_traj([[0.0, 0.0]], [[3.0, 0.0]])
    comps = dict(drone=bce, behavior=ce, intent=0.09, traj=sl_large)
    rng = np.random.default_rng(8)
    linear = True
    for _ in range(100):
        w = rng.uniform(0, 5, 4)
        k = rng.uniform(0, 5)
        a = total_loss(comps, LossWeights(*w))
        linear &= math.isclose(total_loss(comps, LossWeights(*(k * w))), k * a, rel_tol=1e-12, abs_tol=1e-12)
        w2 = rng.uniform(0, 5, 4)
        linear &= math.isclose(total_loss(comps, LossWeights(*(w + w2))), a + total_loss(comps, LossWeights(*w2)),
                               rel_tol=1e-12, abs_tol=1e-12)
    ok = (abs(bce - math.log(2)) <= 1e-9 and abs(ce - math.log(5)) <= 1e-9
          and sl_small == 0.125 and sl_large == 2.5 and linear)
    report(8, ok, f"BCE {bce:.10f}, CE {ce:.10f}, SmoothL1 {sl_small} / {sl_large}, linear in weights {linear}")


def test_criterion_09_determinism(tmp_path):
    small = ["--set", "synth.n_tracks=12", "--set", "synth.track_len=60", "--set", "model.d_model=16",
             "--set", "model.layers=1", "--set", "model.heads=2", "--set", "train.epochs=2", "--set", "train.batch_size=32",
             "--seed", "5"]
    runs = []
    for r in ("a", "b"):
        d = tmp_path / r
        codes = [
            main(["synth", "--out", str(d / "data"), *small]),
            main(["train", str(d / "data"), "--out", str(d / "model.p2pm"), *small]),
            main(["eval", str(d / "data"), "--predictors", "frame,track,naive,p2p", "--checkpoint",
                  str(d / "model.p2pm"), "--out", str(d / "report.md"), *small]),
        ]
        files = sorted(p for p in d.rglob("*") if p.is_file())
        runs.append((codes, {str(p.relative_to(d)): p.read_bytes() for p in files}))
    (codes_a, a), (codes_b, b) = runs
    same = a == b
    ok = codes_a == codes_b == [0, 0, 0] and same
    report(9, ok, f"exit codes {codes_a}/{codes_b}; {len(a)} files byte-identical: {same}")


def test_criterion_10_throughput():
    cfg = ModelConfig(d_model=128, layers=4, heads=4, window=12, horizon=20)
    params = init_params(cfg, 0)
    rng = np.random.default_rng(10)
    track = make_track(np.cumsum(rng.normal(0, 2, 40)) + 300, np.cumsum(rng.normal(0, 2, 40)) + 250)
    tc = TokenizerConfig()
    times = []
    for _ in range(1000):
        t0 = time.perf_counter()
        forward(final_window(track, tc).tokens, params, cfg)
        times.append(time.perf_counter() - t0)
    median_ms = statistics.median(times) * 1e3
    if median_ms <= 10:
        report(10, True, f"median {median_ms:.2f} ms per window (target 10 ms)")
    elif median_ms <= 50:
        report(10, True, f"median {median_ms:.2f} ms per window is above the 10 ms target (reported only)", "SLOW")
    else:
        report(10, False, f"median {median_ms:.2f} ms per window exceeds 50 ms")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
