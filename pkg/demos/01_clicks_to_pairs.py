"""From raw clicks to training pairs on a noisy synthetic marketplace.

Run: python3 demos/01_clicks_to_pairs.py
"""
import dataclasses

from samestyle import (
    SamplerConfig,
    build_graph,
    sample_pairs,
    top_items,
)
from samestyle.sampler import MeanFeatureEmbedder
from samestyle.synth import adversarial_benchmark, sampling_quality

# 50 styles sold by 3 suppliers each; 30% of sessions wander off-style,
# some queries are a single vague keyword and some titles carry foreign keywords
cat, records, queries = adversarial_benchmark(seed=0)
print(len(cat.products), "products,", len(queries), "queries,", len(records), "click records")

graph = build_graph(records, cat.item_nodes(), queries)
q = queries[0]
print("query", q.query_id, repr(" ".join(q.text)))
for item in top_items(graph, q.query_id, 4):
    print("   ", item, graph.weight(q.query_id, item), cat.truth()[item])

# the reference embedder is just mean-pooled raw tokens, no training involved
ref = MeanFeatureEmbedder(cat.by_id())
full = SamplerConfig(core_vocab=cat.core_vocab)
pairs = sample_pairs(graph, ref, full)
precision, n = sampling_quality(pairs, cat.truth())
print(f"all rules on:            {n:4d} pairs, precision {precision:.3f}")

# switch off one rule at a time; each of them is doing real work
for rule in ("use_query_filter", "use_subcategory", "use_similarity", "use_keyword_overlap"):
    p, n = sampling_quality(sample_pairs(graph, ref, dataclasses.replace(full, **{rule: False})), cat.truth())
    print(f"without {rule:20s} {n:4d} pairs, precision {p:.3f}")
