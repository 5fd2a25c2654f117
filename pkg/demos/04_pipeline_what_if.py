"""Pipeline latency analysis: where the time goes, and what vector offload changes.

Loads the shipped 19-layer detector timing table, prints the per-unit split,
then replays the what-if: remap the four layout-converter layers onto the
vector unit at each measured speedup and compare end-to-end latency and fps.

Run:  python3 demos/04_pipeline_what_if.py
"""

import json

from vecboost import (
    apply_remap,
    end_to_end,
    load_layer_table,
    load_remap_rules,
    report,
    total_latency,
)
from vecboost.pipeline import default_config_path

graph = load_layer_table(default_config_path("yolov3_layers.cfg"))
total, per_unit = total_latency(graph)

print(f"{len(graph.layers)} layers, {total:.2f} ms inference total")
for unit in sorted(per_unit):
    share = 100.0 * per_unit[unit] / total
    print(f"  {unit:<6} {per_unit[unit]:7.2f} ms  {share:5.1f}%")

conv = [l for l in graph.layers if l.name == "Converter"]
print(f"\nconverter layers: {len(conv)}, "
      f"{sum(l.ms for l in conv):.1f} ms on the CPU "
      f"({100 * sum(l.ms for l in conv) / total:.1f}% of inference)")

latency, fps, frac = end_to_end(graph, "standard")
print(f"\nstandard input end to end: {latency:.2f} ms, {fps:.2f} fps, "
      f"pre-processing {100 * frac:.1f}% of the total")

print("\nwhat-if: converters on the vector unit")
print(f"{'size':<8} {'conv ms':>8} {'total ms':>9} {'e2e ms':>8} {'fps':>7} {'speedup':>8}")
remap_cfg = default_config_path("converter_remap.cfg")
for size in ("small", "medium", "large"):
    rules = load_remap_rules(remap_cfg, size)
    after = apply_remap(graph, rules)
    t_after, units_after = total_latency(after)
    # preprocessing class names track the remap sizes: small/standard/large
    pre_class = {"small": "small", "medium": "standard", "large": "large"}[size]
    e2e_after, fps_after, _ = end_to_end(after, pre_class)
    e2e_before, _, _ = end_to_end(graph, pre_class)
    print(f"{size:<8} {units_after['VECTOR']:>8.3f} {t_after:>9.2f} "
          f"{e2e_after:>8.2f} {fps_after:>7.2f} {e2e_before / e2e_after:>7.3f}x")

# the report object carries both sides plus the reference figures for the echo
rules = load_remap_rules(remap_cfg, "large")
rep = report(graph, apply_remap(graph, rules), "large", rules=rules)
ref = rep.to_dict()["reference"]
print(f"\nreference figures echoed in the report: "
      f"end_to_end {ref['end_to_end_ms']} ms, "
      f"pre-processing fraction {ref['preprocessing_fraction']}, "
      f"documented_discrepancy={ref['documented_discrepancy']}")
print("\nfull report (large):")
print(json.dumps(rep.to_dict()["change"], indent=2))
