"""Fine-tune the multimodal encoder and compare it with single-modality baselines.

Styles are split in two: even-numbered styles provide training pairs, one
pair from every odd-numbered style is held out for testing, so the test
products were never seen during training.

Run: python3 demos/02_fine_tune_and_evaluate.py [seed]
"""
import sys
import time

from samestyle import DESK_TRAIN, EncoderParams, evaluate, fit, fit_baseline
from samestyle.retrieval import format_table
from samestyle.retrieval import chance_mrr, format_table
from samestyle.synth import desk_benchmark

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
bench = desk_benchmark(seed)
feats = bench.catalog.by_id()
print(f"{len(bench.train_pairs)} training pairs, {len(bench.test_pairs)} held-out test pairs")
print(f"chance MRR with {len(bench.test_pairs)} candidates: {chance_mrr(len(bench.test_pairs))[0]:.4f}")

t0 = time.perf_counter()
params, hist = fit(bench.train_pairs, feats, DESK_TRAIN)
print(f"trained in {time.perf_counter() - t0:.1f}s, best epoch {hist.best_epoch}, "
      f"validation MRR {hist.initial_val_mrr:.4f} -> {hist.best_val_mrr:.4f}")

for e in hist.epochs:
    print(f"  epoch {e['epoch']:2d}  ppm {e['ppm']:.4f}  pdc {e['pdc']:.4f}  plc {e['plc']:.4f}  val {e['val_mrr']:.4f}")

base_v, _ = fit_baseline(bench.train_pairs, feats, DESK_TRAIN, "vv")
base_t, _ = fit_baseline(bench.train_pairs, feats, DESK_TRAIN, "tt")
untrained = EncoderParams.init(8, DESK_TRAIN.hidden_dim, DESK_TRAIN.embed_dim, seed)

reports = {
    "untrained m-m": evaluate(bench.test_pairs, feats, untrained, "mm"),
    "base t-t": evaluate(bench.test_pairs, feats, base_t, "tt"),
    "base v-v": evaluate(bench.test_pairs, feats, base_v, "vv"),
}
for mode in ("tt", "vv", "mm"):
    reports[f"fine-tuned {mode[0]}-{mode[1]}"] = evaluate(bench.test_pairs, feats, params, mode)
print()
print(format_table(reports))
