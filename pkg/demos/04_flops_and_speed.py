"""What the filter buys: analytic FLOPs and measured wall time.

First the closed-form cost model on a large encoder-decoder config at
realistic document lengths, then a live micro-benchmark of a mid-sized
encoder at growing sequence lengths against its filter-free twin.
"""

from dataclasses import replace

from spectran.bench import bench_forward, flops_estimate, results_to_csv
from spectran.model import FilterSpec, presets

# --- analytic cost model -------------------------------------------------
big = presets()["bart-like-flops"]
for name, ratio, n_in, n_out in [("summarization-like", 0.5, 766, 53),
                                 ("long-answer-like", 0.3, 5140, 693)]:
    cfg = replace(big, filters=[FilterSpec(1, ratio)])
    est = flops_estimate(cfg, n_in, n_out)
    print(f"{name}: vanilla/filtered FLOPs ratio = {est['ratio']:.2f}")
print("accounting:", est["assumptions"][:80] + "...")

# --- measured wall time --------------------------------------------------
cfg = presets()["lra-text"]   # D=256, 4 layers, filter r=0.2 after layer 0
print("\nforward pass, batch 4, filtered vs vanilla:")
results = bench_forward(cfg, lengths=[512, 1024, 2048], batch=4, repeats=5)
print(results_to_csv(results))
