"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (lines are
printed even under output capture) or ``python3 tests/test_acceptance.py``.
"""

import cProfile
import io
import pstats
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import chisquare

from oracles import (
    batch_macro_f1,
    batl_oracle,
    central_difference,
    greedy_segmentation_oracle,
    random_wordpiece_case,
    relative_error,
)
from streamtune.cli import main as cli_main
from streamtune.finetune import batl_loss_and_grad, ctl_loss_and_grad, ocl_loss_and_grad, sl_loss_and_grad
from streamtune.harness import RunConfig, aggregate, run_experiment, run_scenario
from streamtune.sampler import SampleRequest, normalize, weighted_sample, weighted_sampling
from streamtune.synthetic import synth_drift_stream
from streamtune.tokenizer import Vocabulary, wordpiece_split

pytestmark = pytest.mark.slow

# scaled-down reproduction settings; these seeds were fixed before the first run
DRIFT_SEED = 7
MASTER_SEED = 1
REPETITIONS = 5


def report(capsys, criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    with capsys.disabled():
        print("\n" + line)
    return ok


# -- 1 -----------------------------------------------------------------------


def test_c01_tokenizer_oracle(capsys):
    rng = np.random.default_rng(1001)
    cases = [random_wordpiece_case(rng) for _ in range(1000)]
    started = time.perf_counter()
    mismatches = 0
    for entries, token in cases:
        if wordpiece_split(token, Vocabulary(frozenset(entries))) != greedy_segmentation_oracle(token, entries):
            mismatches += 1
    elapsed = time.perf_counter() - started
    ok = mismatches == 0 and elapsed < 5.0
    report(capsys, "C1 tokenizer oracle", ok, f"{1000 - mismatches}/1000 exact matches in {elapsed:.2f}s (< 5s)")
    assert ok


# -- 2 -----------------------------------------------------------------------


def _fd_cases(kind, rng, n_configs):
    worst = 0.0
    for _ in range(n_configs):
        hash_dim, out_dim, n = int(rng.integers(5, 10)), int(rng.integers(2, 5)), int(rng.integers(4, 11))
        X = rng.standard_normal((n, hash_dim))
        P = rng.standard_normal((out_dim, hash_dim))
        left, right = rng.integers(0, n, size=(2, 10))
        if kind == "BATL":
            classes = rng.integers(0, 3, size=n)
            f = lambda Q: batl_loss_and_grad(X, classes, Q, 0.5)
        elif kind == "CTL":
            y = rng.integers(0, 2, size=10)
            f = lambda Q: ctl_loss_and_grad(X[left], X[right], y, Q)
        elif kind == "OCL":
            lab = rng.uniform(0, 1, size=10)
            f = lambda Q: ocl_loss_and_grad(X[left], X[right], lab, Q, 1.0)
        else:
            n_labels = int(rng.integers(2, 5))
            head = rng.standard_normal((n_labels, 3 * out_dim))
            lab = rng.integers(0, n_labels, size=10)
            g_head = sl_loss_and_grad(X[left], X[right], lab, P, head)[2]
            num_head = central_difference(lambda H: sl_loss_and_grad(X[left], X[right], lab, P, H)[0], head.copy())
            worst = max(worst, relative_error(g_head, num_head))
            f = lambda Q: sl_loss_and_grad(X[left], X[right], lab, Q, head)[:2]
        analytic = f(P)[1]
        numeric = central_difference(lambda Q: f(Q)[0], P.copy(), step=1e-5)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def test_c02_gradient_correctness(capsys):
    rng = np.random.default_rng(2002)
    started = time.perf_counter()
    worst = {kind: _fd_cases(kind, rng, 25) for kind in ("BATL", "CTL", "OCL", "SL")}
    elapsed = time.perf_counter() - started
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 30.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(capsys, "C2 gradient correctness", ok, f"max rel. error over 25 configs each: {detail} (< 1e-4); "
           f"{elapsed:.1f}s (< 30s)")
    assert ok


# -- 3 -----------------------------------------------------------------------


def test_c03_batl_brute_force(capsys):
    rng = np.random.default_rng(3003)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 11))
        X = rng.standard_normal((n, int(rng.integers(3, 12))))
        P = rng.standard_normal((int(rng.integers(2, 6)), X.shape[1]))
        classes = rng.integers(0, int(rng.integers(2, 4)), size=n)
        margin = float(rng.uniform(0.1, 1.5))
        worst = max(worst, abs(batl_loss_and_grad(X, classes, P, margin)[0] - batl_oracle(X, classes, P, margin)))
    ok = worst < 1e-9
    report(capsys, "C3 BATL brute force", ok, f"max |difference| over 100 batches = {worst:.1e} (< 1e-9)")
    assert ok


# -- 4 -----------------------------------------------------------------------


def test_c04_sampler_statistics(capsys):
    rng = np.random.default_rng(4004)
    draws = 100_000
    p_values = []
    for v in range(10):
        p = normalize(rng.uniform(0.05, 1.0, size=int(rng.integers(2, 21))))
        counts = np.zeros(len(p), dtype=np.int64)
        for s in range(draws):
            counts[weighted_sample(p, SampleRequest(1, rng_seed=v * draws + s))[0]] += 1
        p_values.append(chisquare(counts, p * draws).pvalue)
    ok = min(p_values) > 0.01
    report(capsys, "C4 sampler statistics", ok,
           f"10 weight vectors x {draws} draws, min chi-square p = {min(p_values):.3f} (> 0.01)")
    assert ok


# -- 5 -----------------------------------------------------------------------


def test_c05_class_adjustment_balance(capsys):
    classes = [0] * 90 + [1] * 10
    weights = np.ones(100)
    minority = sum(
        classes[weighted_sampling(weights, classes, SampleRequest(1, True, s))[0][0]] for s in range(10_000)
    )
    share = minority / 10_000
    ok = abs(share - 0.5) <= 0.02
    report(capsys, "C5 class-adjustment balance", ok, f"minority share {share:.4f} over 10000 draws (0.50 +- 0.02)")
    assert ok


# -- 6 -----------------------------------------------------------------------


def test_c06_prequential_correctness(capsys):
    rng = np.random.default_rng(6006)
    methods = ["none", "random", "length", "length_class", "tfidf", "tfidf_class", "wpratio", "wpratio_class"]
    losses = ["BATL", "CTL", "OCL", "SL"]
    exact = 0
    for k in range(20):
        n_classes = int(rng.integers(2, 6))
        data, vocab = synth_drift_stream(1500, n_classes, 400, float(rng.uniform(0, 1)), seed=int(rng.integers(1e6)))
        config = RunConfig(
            stream_length=int(rng.integers(300, 1500)), buffer_size=250, sample_size=int(rng.integers(10, 200)),
            sampling_method=methods[k % len(methods)], loss_kind=losses[k % len(losses)], hash_dim=64, out_dim=8,
            epochs=2, warmup_steps=3,
        )
        result = run_scenario(config, data, vocab, seed=int(rng.integers(2**63)))
        exact += result.macro_f1 == batch_macro_f1(result.gold, result.predicted)
    ok = exact == 20
    report(capsys, "C6 prequential correctness", ok, f"{exact}/20 runs: final cumulative macro-F1 == log replay exactly")
    assert ok


# -- 7, 8, 10: scaled-down reproduction on a synthetic drift stream ----------


@pytest.fixture(scope="module")
def reproduction():
    data, vocab = synth_drift_stream(20_000, 3, 5_000, 0.5, seed=DRIFT_SEED)
    base = RunConfig(
        dataset_name="synthetic", stream_length=20_000, buffer_size=5_000, trigger_point=5_000, sample_size=500,
        repetitions=REPETITIONS, master_seed=MASTER_SEED,
    )
    grid = {
        "baseline": replace(base, sampling_method="none"),
        "BATL random": replace(base, sampling_method="random", loss_kind="BATL"),
        "SL random": replace(base, sampling_method="random", loss_kind="SL"),
        "BATL wpratio_class": replace(base, sampling_method="wpratio_class", loss_kind="BATL"),
        "SL wpratio_class": replace(base, sampling_method="wpratio_class", loss_kind="SL"),
        "BATL random n_s=200": replace(base, sampling_method="random", loss_kind="BATL", sample_size=200),
        "BATL random n_s=2000": replace(base, sampling_method="random", loss_kind="BATL", sample_size=2000),
    }
    started = time.perf_counter()
    results = run_experiment(list(grid.values()), data, vocab, jobs=1)
    elapsed = time.perf_counter() - started
    assert all(r.error is None for r in results), [r.error for r in results if r.error]
    by_name = {}
    for name, config in grid.items():
        runs = [r for r in results if r.config == config]
        (row,) = aggregate(runs)
        by_name[name] = {"runs": runs, "mean": row["macro_f1_mean"], "std": row["macro_f1_std"]}
    return {"data": data, "vocab": vocab, "base": base, "by_name": by_name, "elapsed": elapsed}


def _fmt(entry):
    return f"{entry['mean']:.4f} +- {entry['std']:.4f}"


def test_c07_qualitative_reproduction(capsys, reproduction):
    r = reproduction["by_name"]
    baseline = r["baseline"]["mean"]
    with capsys.disabled():
        print()
        for name, entry in r.items():
            print(f"    {name:<22} macro-F1 {_fmt(entry)}  ({REPETITIONS} reps)")
    batl_gain = r["BATL random"]["mean"] - baseline
    sl_gain = r["SL random"]["mean"] - baseline
    ok_a = batl_gain >= 0.02 and sl_gain >= 0.02
    report(capsys, "C7a BATL and SL beat no-update baseline by >= 0.02", ok_a,
           f"baseline {baseline:.4f}; BATL {batl_gain:+.4f}, SL {sl_gain:+.4f} (random sampling, n_s=500)")
    # informational only: the criterion's loss comparison is made with random sampling
    sl_wp_gain = r["SL wpratio_class"]["mean"] - baseline
    with capsys.disabled():
        print(f"[INFO] C7a SL with wpratio_class sampling: {sl_wp_gain:+.4f} over baseline")
    diff = r["BATL wpratio_class"]["mean"] - r["BATL random"]["mean"]
    ok_b = diff >= -0.005
    report(capsys, "C7b wpratio_class >= random for BATL (tol 0.005)", ok_b,
           f"wpratio_class {r['BATL wpratio_class']['mean']:.4f} vs random {r['BATL random']['mean']:.4f} "
           f"(diff {diff:+.4f})")
    ok_t = reproduction["elapsed"] < 600
    report(capsys, "C7 runtime", ok_t, f"{reproduction['elapsed']:.0f}s for all 35 runs of C7/C8 (< 600s)")
    assert ok_a and ok_b and ok_t


def test_c08_sample_size_trend(capsys, reproduction):
    r = reproduction["by_name"]
    small, large = r["BATL random n_s=200"]["mean"], r["BATL random n_s=2000"]["mean"]
    ok = large >= small - 0.005
    report(capsys, "C8 sample-size trend (BATL)", ok,
           f"n_s=200 {_fmt(r['BATL random n_s=200'])}, n_s=500 {_fmt(r['BATL random'])}, "
           f"n_s=2000 {_fmt(r['BATL random n_s=2000'])}")
    assert ok


# -- 9 -----------------------------------------------------------------------


def test_c09_end_to_end_determinism(capsys, tmp_path):
    data_dir = tmp_path / "data"
    assert cli_main(["synth", "--items", "3000", "--classes", "3", "--drift-at", "1000", "--shift", "0.5",
                     "--seed", "9", "--out", str(data_dir)]) == 0
    config = tmp_path / "exp.cfg"
    config.write_text(
        "dataset = data/dataset.jsonl\nvocabulary = data/vocab.txt\noutput_dir = out\n"
        "stream_length = 2500\nbuffer_size = 1000\nsample_size = 200\nrepetitions = 2\nmaster_seed = 11\n"
        "sampling_method = none, random, tfidf_class, wpratio_class\nloss_kind = BATL, SL\n"
        "record_timing = false\n",
        encoding="utf-8",
    )
    results = tmp_path / "out" / "results.csv"
    outputs = []
    for jobs in ("1", "2"):
        assert cli_main(["run", "--config", str(config), "--jobs", jobs]) == 0
        outputs.append(results.read_bytes())
    ok = outputs[0] == outputs[1]
    n_rows = sum(1 for line in outputs[0].decode().splitlines() if not line.startswith("#")) - 1
    report(capsys, "C9 end-to-end determinism", ok,
           f"two `run` invocations -> byte-identical results.csv ({len(outputs[0])} bytes, {n_rows} runs)")
    assert ok


# -- 10 ----------------------------------------------------------------------


def test_c10_throughput(capsys, reproduction):
    # baseline runs contain no fine-tuning, so their wall time is the prequential loop alone
    runs = reproduction["by_name"]["baseline"]["runs"]
    rates = [20_000 / r.elapsed_seconds for r in runs]
    rate = min(rates)
    ok = rate >= 1000
    report(capsys, "C10 throughput (soft)", ok,
           f"slowest baseline run {rate:,.0f} items/s, fastest {max(rates):,.0f} (>= 1,000; hash_dim 512, out_dim 64)")
    if not ok:
        profiler = cProfile.Profile()
        profiler.runcall(run_scenario, replace(reproduction["base"], sampling_method="none"),
                         reproduction["data"], reproduction["vocab"])
        buf = io.StringIO()
        pstats.Stats(profiler, stream=buf).sort_stats("cumulative").print_stats(15)
        with capsys.disabled():
            print(buf.getvalue())
        pytest.xfail("soft criterion: throughput below target, profile printed above")


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-v", "-p", "no:cacheprovider"]))
