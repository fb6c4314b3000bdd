"""Acceptance checks, one per criterion.

Each check prints a ``PASS``/``FAIL`` line and then asserts. Under pytest the
lines are repeated in the terminal summary; run directly as a script
(``python3 tests/test_acceptance.py``) to get just the lines.
"""
import contextlib
import dataclasses
import io
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from oracles import brute_force_pairs, random_click_world  # noqa: E402

from samestyle import cli  # noqa: E402
from samestyle import loss as L  # noqa: E402
from samestyle.clickgraph import ClickCounts, LambdaWeights, build_graph, edge_weight  # noqa: E402
from samestyle.encoder import EncoderParams, MaskMode, ProductFeatures, encode, encode_tokens  # noqa: E402
from samestyle.retrieval import chance_mrr, evaluate, mrr, recall_at_k  # noqa: E402
from samestyle.sampler import MeanFeatureEmbedder, SamplerConfig, TrainingPair, sample_pairs  # noqa: E402
from samestyle.synth import adversarial_benchmark, desk_benchmark, sampling_quality  # noqa: E402
from samestyle.tensorgrad import finite_diff_check, track_kinks  # noqa: E402
from samestyle.trainer import DESK_TRAIN, fit, fit_baseline, make_batches  # noqa: E402

FD_STEP = 1e-5
KINK_MARGIN = 10 * FD_STEP


# collected here; under pytest conftest.py prints them in the terminal summary
SUMMARY: list[str] = []


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    SUMMARY.append(line)
    print(line, flush=True)
    return ok


# 1. gradients of the combined loss through the encoder

def _kink_distance(img, txt, arrays, n, cfg):
    """Smallest |argument| of any relu/hinge whose value can change with the parameters.

    The PPM diagonal terms are identically zero and are left out.
    """
    with track_kinks() as k:
        emb = encode_tokens(img, txt, arrays)
    S = L.similarity_from_stacks(emb.m.data[:n], emb.v.data[:n], emb.t.data[:n], emb.m.data[n:])
    mm, vm, tm = S.mm.data, S.vm.data, S.tm.data
    off = ~np.eye(n, dtype=bool)
    args = [(s - np.diag(s)[:, None] + cfg.alpha1)[off] for s in (mm, vm, tm)]
    args += [mm - np.diag(vm)[:, None] + cfg.alpha2, mm - np.diag(tm)[:, None] + cfg.alpha2]
    args += [(a - b) ** 2 - cfg.alpha3 for a, b in ((vm, mm), (tm, mm), (vm, tm))]
    return min(k[0], min(float(np.abs(a).min()) for a in args))


def check_gradients():
    n, d_in, d_out, hidden = 4, 4, 8, 16
    cfg = L.LossConfig()
    start = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        img = rng.normal(size=(2 * n, 4, d_in))
        txt = rng.normal(size=(2 * n, 7, d_in))

        def f(leaves):
            emb = encode_tokens(img, txt, leaves)
            S = L.similarity_from_stacks(emb.m[:n], emb.v[:n], emb.t[:n], emb.m[n:])
            return L.total_loss(S, cfg).total

        for attempt in range(100):
            params = EncoderParams.init(d_in, hidden, d_out, seed * 1000 + attempt)
            if _kink_distance(img, txt, params.arrays(), n, cfg) >= KINK_MARGIN:
                break
        else:
            return report(1, False, f"seed {seed}: no kink-free parameters found")
        worst = max(worst, finite_diff_check(f, params.arrays(), step=FD_STEP))
    elapsed = time.perf_counter() - start
    return report(1, worst < 1e-5 and elapsed < 5, f"max relative gradient error {worst:.2e} (< 1e-5), {elapsed:.2f}s (< 5s)")


def test_criterion_1_gradients():
    assert check_gradients()


# 2. loss hand values

def check_hand_values():
    def v(t):
        return float(t.data)

    def same(S):
        return L.as_similarities(S, S, S)

    side = np.array([[1.0, 0.4], [-0.3, 1.0]])
    got = {
        "ppm a": v(L.ppm_loss(same(np.array([[0.9, 0.8], [0.2, 0.95]])), alpha1=0.3)),
        "ppm b": v(L.ppm_loss(same(np.ones((2, 2))), alpha1=0.3)),
        "pdc a": v(L.pdc_loss(L.as_similarities(np.eye(2), side, side), 0.2)),
        "pdc b": v(L.pdc_loss(same(np.ones((2, 2))), 0.2)),
        "plc": v(L.plc_loss(L.as_similarities([[0.8]], [[0.9]], [[0.8]]), 0.0025)),
        "total": v(L.combine(0.15, 0.2, 0.005).total),
    }
    want = {"ppm a": 0.05, "ppm b": 0.15, "pdc a": 0.1, "pdc b": 0.2, "plc": 0.005, "total": 0.11833333333333333}
    err = max(abs(got[k] - want[k]) for k in want)
    return report(2, err <= 1e-12, f"six hand values, max abs error {err:.1e} (<= 1e-12)")


def test_criterion_2_hand_values():
    assert check_hand_values()


# 3. exact zero cases

def check_zero_cases():
    rng = np.random.default_rng(3)
    one = L.as_similarities(*(rng.uniform(-1, 1, size=(1, 1)) for _ in range(3)))
    ppm_one = float(L.ppm_loss(one).data)
    S = rng.uniform(-1, 1, size=(6, 6))
    plc_same = float(L.plc_loss(L.as_similarities(S, S, S)).data)
    e = np.eye(4)
    parts = L.total_loss(L.similarity_from_stacks(e, e, e, e), L.LossConfig(include_diagonal_pdc=False)).values()
    ok = ppm_one == 0.0 and plc_same == 0.0 and all(x == 0.0 for x in parts.values())
    return report(3, ok, f"N=1 PPM={ppm_one}, identical-channel PLC={plc_same}, aligned fixed point {parts}")


def test_criterion_3_zero_cases():
    assert check_zero_cases()


# 4. sampler against the brute-force rule check

def check_sampler_oracle():
    start = time.perf_counter()
    mismatches = total = 0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        records, items, queries, features, vocab = random_click_world(rng)
        graph = build_graph(records, items, queries)
        got = sample_pairs(graph, MeanFeatureEmbedder(features), SamplerConfig(core_vocab=frozenset(vocab)))
        want = brute_force_pairs(records, items, queries, features, vocab)
        total += len(want)
        mismatches += {(p.trigger, p.recall) for p in got} != want or len(got) != len(want)
    elapsed = time.perf_counter() - start
    return report(
        4, mismatches == 0 and elapsed < 10, f"{mismatches}/100 worlds differ ({total} pairs in total), {elapsed:.2f}s (< 10s)"
    )


def test_criterion_4_sampler_oracle():
    assert check_sampler_oracle()


# 5. edge weight arithmetic

def check_edge_weight():
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(1000):
        counts = [int(c) for c in rng.integers(0, 1000, size=5)]
        lam = [float(x) for x in rng.uniform(0, 10, size=5)]
        want = lam[0] * counts[0] + lam[1] * counts[1] + lam[2] * counts[2] + lam[3] * counts[3] + lam[4] * counts[4]
        bad += edge_weight(ClickCounts(*counts), LambdaWeights(tuple(lam))) != want
    return report(5, bad == 0, f"{bad}/1000 random count/weight cases differ from the arithmetic oracle")


def test_criterion_5_edge_weight():
    assert check_edge_weight()


# 6. every sampling rule earns its keep

RULES = ("use_query_filter", "use_subcategory", "use_similarity", "use_keyword_overlap")


def check_ablation():
    rows, ok = [], True
    for seed in range(5):
        cat, records, queries = adversarial_benchmark(seed)
        graph = build_graph(records, cat.item_nodes(), queries)
        ref = MeanFeatureEmbedder(cat.by_id())
        base = SamplerConfig(core_vocab=cat.core_vocab)
        full, _ = sampling_quality(sample_pairs(graph, ref, base), cat.truth())
        ablated = [
            sampling_quality(sample_pairs(graph, ref, dataclasses.replace(base, **{r: False})), cat.truth())[0]
            for r in RULES
        ]
        ok &= all(full > a for a in ablated)
        rows.append(f"{full:.3f}>{max(ablated):.3f}")
    return report(6, ok, "full precision > best single-rule ablation on 5 seeds: " + ", ".join(rows))


def test_criterion_6_ablation():
    assert check_ablation()


# 7. mode ordering after fine-tuning

def check_mode_ordering():
    start = time.perf_counter()
    bench = desk_benchmark(0)
    feats = bench.catalog.by_id()
    params, _ = fit(bench.train_pairs, feats, DESK_TRAIN)
    base_v, _ = fit_baseline(bench.train_pairs, feats, DESK_TRAIN, "vv")
    base_t, _ = fit_baseline(bench.train_pairs, feats, DESK_TRAIN, "tt")
    r = {
        "mm": evaluate(bench.test_pairs, feats, params, "mm").mrr,
        "vv": evaluate(bench.test_pairs, feats, params, "vv").mrr,
        "tt": evaluate(bench.test_pairs, feats, params, "tt").mrr,
        "base vv": evaluate(bench.test_pairs, feats, base_v, "vv").mrr,
        "base tt": evaluate(bench.test_pairs, feats, base_t, "tt").mrr,
    }
    elapsed = time.perf_counter() - start
    ok = r["mm"] >= r["vv"] >= r["base vv"] and r["tt"] >= r["base tt"] and elapsed < 120
    detail = ", ".join(f"{k} {v:.4f}" for k, v in r.items())
    return report(7, ok, f"{detail}; {elapsed:.1f}s (< 120s)")


def test_criterion_7_mode_ordering():
    assert check_mode_ordering()


# 8. combined objective vs matching loss alone

def check_objective_ablation():
    wins, rows = 0, []
    ppm_only = dataclasses.replace(DESK_TRAIN, loss_terms=("ppm",))
    for seed in range(3):
        bench = desk_benchmark(seed)
        feats = bench.catalog.by_id()
        _, h_total = fit(bench.train_pairs, feats, DESK_TRAIN)
        _, h_ppm = fit(bench.train_pairs, feats, ppm_only)
        wins += h_total.best_val_mrr >= h_ppm.best_val_mrr
        rows.append(f"seed {seed} {h_total.best_val_mrr:.4f} vs {h_ppm.best_val_mrr:.4f}")
    return report(8, wins >= 2, f"combined >= matching-only validation MRR on {wins}/3 seeds: " + ", ".join(rows))


def test_criterion_8_objective_ablation():
    assert check_objective_ablation()


# 9. metrics

def _random_products(rng, n):
    return [ProductFeatures(f"p{i:03d}", rng.normal(size=(4, 5)), rng.normal(size=(7, 5))) for i in range(n)]


def check_metrics():
    example = mrr([1, 2, 4])
    rng = np.random.default_rng(9)
    monotone = True
    for _ in range(1000):
        ranks = rng.integers(1, 50, size=int(rng.integers(1, 30))).tolist()
        values = [recall_at_k(ranks, k) for k in range(1, 51)]
        monotone &= all(a <= b for a, b in zip(values, values[1:]))
    m, seeds, ranks = 20, 30, []
    for seed in range(seeds):
        r = np.random.default_rng(2000 + seed)
        ps = _random_products(r, 2 * m)
        feats = {p.item_id: p for p in ps}
        pairs = [TrainingPair(ps[2 * i].item_id, ps[2 * i + 1].item_id) for i in range(m)]
        ranks += evaluate(pairs, feats, EncoderParams.init(5, 8, 6, seed), "mm").ranks
    mean, std = chance_mrr(m)
    got = mrr(ranks)
    tol = 3 * std / math.sqrt(len(ranks))
    ok = abs(example - 0.58333333) <= 1e-8 and monotone and abs(got - mean) <= tol
    return report(
        9, ok, f"mrr([1,2,4])={example:.8f}, recall@K monotone={monotone}, random-params MRR {got:.4f} vs chance {mean:.4f} +- {tol:.4f}"
    )


def test_criterion_9_metrics():
    assert check_metrics()


# 10. invariances

def check_invariances():
    rng = np.random.default_rng(10)
    perm_err = scale_err = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 12))
        stacks = [rng.normal(size=(n, 6)) for _ in range(4)]
        unit = [s / np.linalg.norm(s, axis=1, keepdims=True) for s in stacks]
        base = L.total_loss(L.similarity_from_stacks(*unit)).values()
        perm = rng.permutation(n)
        shuffled = L.total_loss(L.similarity_from_stacks(*(u[perm] for u in unit))).values()
        perm_err = max(perm_err, max(abs(base[k] - shuffled[k]) for k in base))
        scaled = [s * rng.uniform(0.01, 100, size=(n, 1)) for s in stacks]
        rescaled = [s / np.linalg.norm(s, axis=1, keepdims=True) for s in scaled]
        again = L.total_loss(L.similarity_from_stacks(*rescaled)).values()
        scale_err = max(scale_err, max(abs(base[k] - again[k]) for k in base))

    masking_ok = True
    for seed in range(50):
        r = np.random.default_rng(seed)
        params = EncoderParams.init(5, 8, 6, seed)
        img, txt = r.normal(size=(4, 5)), r.normal(size=(7, 5))
        p = ProductFeatures("p", img, txt)
        masking_ok &= np.array_equal(
            encode(p, params, MaskMode.IMAGE_ONLY), encode(ProductFeatures("p", img, 10 * r.normal(size=txt.shape)), params, MaskMode.IMAGE_ONLY)
        )
        masking_ok &= np.array_equal(
            encode(p, params, MaskMode.TEXT_ONLY), encode(ProductFeatures("p", 10 * r.normal(size=img.shape), txt), params, MaskMode.TEXT_ONLY)
        )

    violations = 0
    for seed in range(200):
        r = np.random.default_rng(seed)
        count = int(r.integers(0, 80))
        subs = r.integers(0, 4, size=count)
        styles = r.integers(0, 10, size=count)
        pairs = [TrainingPair(f"t{i}", f"r{i}", "", f"s{subs[i]}") for i in range(count)]
        style = {f"t{i}": f"{subs[i]}-{styles[i]}" for i in range(count)}
        plan = make_batches(pairs, lambda p: style[p.trigger], int(r.integers(2, 17)), seed)
        violations += plan.violations(lambda p: style[p.trigger])

    ok = perm_err <= 1e-12 and scale_err <= 1e-9 and masking_ok and violations == 0
    return report(
        10,
        ok,
        f"permutation {perm_err:.1e} (<= 1e-12), scale {scale_err:.1e} (<= 1e-9), "
        f"masking bit-exact={masking_ok}, batch-plan violations {violations}",
    )


def test_criterion_10_invariances():
    assert check_invariances()


# 11. end-to-end determinism

def _pipeline(root: Path) -> tuple[bytes, bytes]:
    cfg = root / "config.json"
    cfg.write_text('{"seed": 0}\n')
    for step in ("synth", "build-graph", "sample", "train", "eval"):
        code = cli.main([step, "--config", str(cfg)])
        if code != 0:
            raise AssertionError(f"{step} exited with {code}")
    return (root / "report.txt").read_bytes(), (root / "report.json").read_bytes()


def check_determinism():
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        with contextlib.redirect_stdout(io.StringIO()):
            first, second = _pipeline(Path(a)), _pipeline(Path(b))
    return report(11, first == second, f"two full pipeline runs give byte-identical reports ({len(first[0])} + {len(first[1])} bytes)")


def test_criterion_11_determinism():
    assert check_determinism()


CHECKS = [
    check_gradients,
    check_hand_values,
    check_zero_cases,
    check_sampler_oracle,
    check_edge_weight,
    check_ablation,
    check_mode_ordering,
    check_objective_ablation,
    check_metrics,
    check_invariances,
    check_determinism,
]


if __name__ == "__main__":
    results = [check() for check in CHECKS]
    sys.exit(0 if all(results) else 1)
