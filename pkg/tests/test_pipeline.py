"""Pipeline latency analytics: layer table, end-to-end math, what-if remap."""

import json

import numpy as np
import pytest

from vecboost.errors import ConfigError
from vecboost.pipeline import (
    LayerEntry,
    PipelineGraph,
    RemapRule,
    apply_remap,
    default_config_path,
    end_to_end,
    load_layer_table,
    load_remap_rules,
    parse_report_csv,
    report,
    total_latency,
)

LAYERS_CFG = default_config_path("yolov3_layers.cfg")
REMAP_CFG = default_config_path("converter_remap.cfg")


@pytest.fixture(scope="module")
def default_graph():
    return load_layer_table(LAYERS_CFG)


# -- loading ------------------------------------------------------------------

def test_default_table_shape(default_graph):
    assert len(default_graph.layers) == 19
    assert sum(1 for l in default_graph.layers if l.unit == "DLA") == 3
    assert default_graph.layers[0].name == "Converter"
    assert default_graph.layers[1].unit == "DLA"


def test_default_table_sums(default_graph):
    total, per_unit = total_latency(default_graph)
    assert total == pytest.approx(133.22, abs=0.01)
    assert per_unit["CPU"] == pytest.approx(65.42, abs=0.01)
    assert per_unit["DLA"] == pytest.approx(67.80, abs=0.01)


def test_default_preprocessing_classes(default_graph):
    assert default_graph.preprocessing == {"small": 19.2, "standard": 27.2,
                                           "large": 36.5}


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_layer_table(tmp_path / "nope.cfg")


def test_empty_layer_list_rejected(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("# nothing here\n[layers]\n")
    with pytest.raises(ConfigError):
        load_layer_table(p)


def test_unknown_unit_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("L | desc | GPU | 1.0\n")
    with pytest.raises(ConfigError):
        load_layer_table(p)


def test_malformed_row_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("L | desc | CPU\n")
    with pytest.raises(ConfigError):
        load_layer_table(p)
    p.write_text("L | desc | CPU | fast\n")
    with pytest.raises(ConfigError):
        load_layer_table(p)
    p.write_text("[wat]\nL | desc | CPU | 1\n")
    with pytest.raises(ConfigError):
        load_layer_table(p)


def test_negative_latency_rejected():
    with pytest.raises(ConfigError):
        LayerEntry("L", "d", "CPU", -0.1)
    with pytest.raises(ConfigError):
        PipelineGraph(layers=())


def test_preprocessing_section_overrides_defaults(tmp_path):
    p = tmp_path / "t.cfg"
    p.write_text("L | d | CPU | 1\n[preprocessing]\ntiny | 2.5\n")
    g = load_layer_table(p)
    assert g.preprocessing == {"tiny": 2.5}


# -- totals and end-to-end -------------------------------------------------------

def test_single_layer_total():
    g = PipelineGraph(layers=(LayerEntry("L", "d", "CPU", 1.0),))
    assert total_latency(g) == (1.0, {"CPU": 1.0})


def test_per_unit_shares_sum_to_total():
    rng = np.random.default_rng(5)
    units = ("CPU", "DLA", "VECTOR")
    for _ in range(25):
        layers = tuple(
            LayerEntry(f"L{k}", "d", units[int(rng.integers(0, 3))],
                       float(rng.uniform(0, 30)))
            for k in range(int(rng.integers(1, 12))))
        g = PipelineGraph(layers=layers)
        total, per_unit = total_latency(g)
        assert sum(per_unit.values()) == pytest.approx(total, rel=1e-12)


def test_end_to_end_standard(default_graph):
    latency, fps, fraction = end_to_end(default_graph, "standard")
    assert latency == pytest.approx(160.42, abs=0.01)
    assert fraction == pytest.approx(27.2 / 160.42, abs=1e-9)
    assert fps * latency == pytest.approx(1000.0, abs=1e-9)


def test_end_to_end_zero_preprocessing():
    g = PipelineGraph(layers=(LayerEntry("L", "d", "CPU", 10.0),),
                      preprocessing={"none": 0.0})
    latency, fps, fraction = end_to_end(g, "none")
    assert latency == 10.0 and fraction == 0.0
    assert fps == pytest.approx(100.0)


def test_end_to_end_unknown_size(default_graph):
    with pytest.raises(ConfigError):
        end_to_end(default_graph, "giant")


# -- remapping ---------------------------------------------------------------------

def test_identity_remap_keeps_totals(default_graph):
    rules = [RemapRule("*", "CPU", 1.0)]
    total_before, _ = total_latency(default_graph)
    total_after, _ = total_latency(apply_remap(default_graph, rules))
    assert total_after == pytest.approx(total_before, rel=1e-12)


def test_large_converter_remap_share(default_graph):
    rules = load_remap_rules(REMAP_CFG, "large")
    assert rules == [RemapRule("Converter", "VECTOR", 9.934)]
    after = apply_remap(default_graph, rules)
    _, per_unit = total_latency(after)
    assert per_unit["VECTOR"] == pytest.approx(1.913, abs=0.001)
    assert per_unit["VECTOR"] == pytest.approx(19.0 / 9.934, abs=1e-9)
    assert per_unit["DLA"] == pytest.approx(67.80, abs=0.01)
    # untouched layers keep their latencies
    names = [l.name for l in after.layers]
    assert names == [l.name for l in default_graph.layers]
    for before_l, after_l in zip(default_graph.layers, after.layers):
        if before_l.name != "Converter":
            assert after_l.ms == before_l.ms and after_l.unit == before_l.unit
        else:
            assert after_l.unit == "VECTOR"


def test_all_shipped_remap_sizes(default_graph):
    for size, factor in (("small", 4.601), ("medium", 8.638), ("large", 9.934)):
        after = apply_remap(default_graph, load_remap_rules(REMAP_CFG, size))
        _, per_unit = total_latency(after)
        assert per_unit["VECTOR"] == pytest.approx(19.0 / factor, abs=0.001)


def test_remap_is_multiplicative(default_graph):
    twice = apply_remap(apply_remap(default_graph,
                                    [RemapRule("Converter", "VECTOR", 2.0)]),
                        [RemapRule("Converter", "VECTOR", 2.0)])
    once = apply_remap(default_graph, [RemapRule("Converter", "VECTOR", 4.0)])
    for a, b in zip(twice.layers, once.layers):
        assert a.ms == pytest.approx(b.ms, rel=1e-12)


def test_remap_leaves_original_untouched(default_graph):
    before = [l.ms for l in default_graph.layers]
    apply_remap(default_graph, [RemapRule("*", "VECTOR", 10.0)])
    assert [l.ms for l in default_graph.layers] == before


def test_unmatched_pattern_warns(default_graph):
    with pytest.warns(RuntimeWarning, match="matched no layers"):
        apply_remap(default_graph, [RemapRule("NoSuchLayer", "VECTOR", 2.0)])


def test_remap_rule_validation():
    with pytest.raises(ConfigError):
        RemapRule("x", "VECTOR", 0.0)
    with pytest.raises(ConfigError):
        RemapRule("x", "TPU", 2.0)


def test_remap_rules_missing_size(tmp_path):
    with pytest.raises(ConfigError):
        load_remap_rules(REMAP_CFG, "huge")


# -- reports ------------------------------------------------------------------------

def test_report_identity_ratios(default_graph):
    r = report(default_graph, default_graph, "standard")
    d = r.to_dict()
    assert d["change"]["total_speedup"] == pytest.approx(1.0)
    assert d["change"]["end_to_end_speedup"] == pytest.approx(1.0)
    assert d["change"]["fps_gain"] == pytest.approx(1.0)


def test_report_contents_after_remap(default_graph):
    rules = load_remap_rules(REMAP_CFG, "large")
    after = apply_remap(default_graph, rules)
    r = report(default_graph, after, "large", rules=rules)
    d = r.to_dict()
    assert d["before"]["total_ms"] == pytest.approx(133.22, abs=0.01)
    assert d["after"]["vector_ms"] == pytest.approx(1.913, abs=0.001)
    assert d["before"]["resolution"] == 618
    assert "9.934" in d["rules"]["rule_1"]
    assert d["reference"]["end_to_end_ms"] == 163.0
    assert d["reference"]["total_speedup_large"] == 3.668
    assert d["reference"]["documented_discrepancy"] is True
    assert d["change"]["fps_gain"] > 1.0


def test_report_csv_round_trip(default_graph):
    rules = load_remap_rules(REMAP_CFG, "medium")
    after = apply_remap(default_graph, rules)
    r = report(default_graph, after, "standard", rules=rules)
    assert parse_report_csv(r.to_csv()) == r.flat()


def test_report_json_deterministic(default_graph):
    r1 = report(default_graph, default_graph, "small")
    r2 = report(default_graph, default_graph, "small")
    assert r1.to_json() == r2.to_json()
    parsed = json.loads(r1.to_json())
    assert list(parsed) == ["before", "after", "change", "rules", "reference"]


def test_report_csv_header_enforced():
    with pytest.raises(ConfigError):
        parse_report_csv("a,b\n1,2\n")
