"""End-to-end latency analytics for the YOLOv3 layer-to-unit mapping.

The model is additive and sequential: a pipeline is an ordered list of
layers, each assigned to one unit (CPU, DLA, or VECTOR) with a latency in
milliseconds, plus a per-size-class image preprocessing cost that runs
before the network. End-to-end latency for a frame is the layer sum plus
preprocessing; fps is 1000 / latency.

What-if remapping moves layers whose names match a pattern onto another
unit at a given speedup factor, dividing their latency by that factor.
The shipped remap config carries the measured converter speedups per image
size; the "Total" speedups from the same measurement campaign are surfaced
in reports as reference values only, since their exact composition is not
defined anywhere we can recompute from.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError

UNITS = ("CPU", "DLA", "VECTOR")

DEFAULT_PREPROCESS_MS = {"small": 19.2, "standard": 27.2, "large": 36.5}
SIZE_RESOLUTIONS = {"small": 320, "standard": 416, "large": 618}

# Reference figures quoted with the original measurements. The end-to-end
# number does not equal the sum of its published parts (133.22 + 27.2 =
# 160.42, not 163), so reports carry both and flag the difference.
REFERENCE_END_TO_END_MS = 163.0
REFERENCE_PREPROCESS_FRACTION = 0.18
REFERENCE_TOTAL_SPEEDUPS = {"small": 2.260, "medium": 3.003, "large": 3.668}


@dataclass(frozen=True)
class LayerEntry:
    name: str
    description: str
    unit: str
    ms: float

    def __post_init__(self) -> None:
        if self.unit not in UNITS:
            raise ConfigError(f"unknown unit {self.unit!r} for layer {self.name!r}")
        if not self.ms >= 0:
            raise ConfigError(f"layer {self.name!r} latency must be >= 0, got {self.ms}")


@dataclass(frozen=True)
class PipelineGraph:
    layers: tuple[LayerEntry, ...]
    preprocessing: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_PREPROCESS_MS))

    def __post_init__(self) -> None:
        if not self.layers:
            raise ConfigError("pipeline graph must contain at least one layer")
        for k, v in self.preprocessing.items():
            if not v >= 0:
                raise ConfigError(f"preprocessing {k!r} must be >= 0, got {v}")


@dataclass(frozen=True)
class RemapRule:
    pattern: str
    target_unit: str
    speedup: float

    def __post_init__(self) -> None:
        if self.target_unit not in UNITS:
            raise ConfigError(f"unknown target unit {self.target_unit!r}")
        if not self.speedup > 0:
            raise ConfigError(f"speedup must be > 0, got {self.speedup}")


def default_config_path(name: str) -> Path:
    return Path(str(resources.files("vecboost") / "configs" / name))


def _config_rows(path) -> Iterable[tuple[str, list[str], int]]:
    """Yield (section, pipe-split fields, line number); '#' starts a comment."""
    section = ""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        yield section, [f.strip() for f in line.split("|")], lineno


def load_layer_table(path) -> PipelineGraph:
    """Parse a layer table config into a graph.

    Layer records live in the (default) `[layers]` section as
    `name | description | unit | ms`; an optional `[preprocessing]` section
    holds `size_class | ms` pairs overriding the built-in defaults.
    """
    layers = []
    preprocess = dict(DEFAULT_PREPROCESS_MS)
    saw_preprocess_section = False
    for section, fields, lineno in _config_rows(path):
        if section in ("", "layers"):
            if len(fields) != 4:
                raise ConfigError(
                    f"{path}:{lineno}: expected name | description | unit | ms")
            name, desc, unit, ms = fields
            try:
                latency = float(ms)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad latency {ms!r}") from None
            layers.append(LayerEntry(name, desc, unit, latency))
        elif section == "preprocessing":
            if not saw_preprocess_section:
                preprocess = {}
                saw_preprocess_section = True
            if len(fields) != 2:
                raise ConfigError(f"{path}:{lineno}: expected size_class | ms")
            try:
                preprocess[fields[0]] = float(fields[1])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad latency {fields[1]!r}") from None
        else:
            raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
    if not layers:
        raise ConfigError(f"{path}: no layers defined")
    return PipelineGraph(layers=tuple(layers), preprocessing=preprocess)


def load_remap_rules(path, size_class: str) -> list[RemapRule]:
    """Read `size_class | pattern | target_unit | speedup` rows for one size."""
    rules = []
    seen_sizes = set()
    for section, fields, lineno in _config_rows(path):
        if section not in ("", "remap"):
            raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
        if len(fields) != 4:
            raise ConfigError(
                f"{path}:{lineno}: expected size_class | pattern | unit | speedup")
        size, pattern, unit, speedup = fields
        seen_sizes.add(size)
        if size != size_class:
            continue
        try:
            factor = float(speedup)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad speedup {speedup!r}") from None
        rules.append(RemapRule(pattern=pattern, target_unit=unit, speedup=factor))
    if not rules:
        raise ConfigError(
            f"{path}: no remap rules for size {size_class!r} (have {sorted(seen_sizes)})")
    return rules


# -- analytics --------------------------------------------------------------------

def total_latency(graph: PipelineGraph) -> tuple[float, dict[str, float]]:
    """Sum of layer latencies, plus the same grouped by assigned unit."""
    per_unit: dict[str, float] = {}
    for layer in graph.layers:
        per_unit[layer.unit] = per_unit.get(layer.unit, 0.0) + layer.ms
    return sum(layer.ms for layer in graph.layers), per_unit


def end_to_end(graph: PipelineGraph, size_class: str) -> tuple[float, float, float]:
    """(latency ms, fps, preprocessing fraction) for one image size class."""
    if size_class not in graph.preprocessing:
        raise ConfigError(
            f"unknown size class {size_class!r} (have {sorted(graph.preprocessing)})")
    pre = graph.preprocessing[size_class]
    total, _ = total_latency(graph)
    latency = total + pre
    return latency, 1000.0 / latency, pre / latency


def apply_remap(graph: PipelineGraph, rules: Iterable[RemapRule]) -> PipelineGraph:
    """New graph with matching layers retimed and reassigned; input unchanged.

    A layer matched by several rules compounds their speedups. A rule that
    matches nothing produces a warning, not an error.
    """
    rules = list(rules)
    matched = [False] * len(rules)
    layers = []
    for layer in graph.layers:
        ms, unit = layer.ms, layer.unit
        for k, rule in enumerate(rules):
            if fnmatchcase(layer.name, rule.pattern):
                matched[k] = True
                ms /= rule.speedup
                unit = rule.target_unit
        layers.append(LayerEntry(layer.name, layer.description, unit, ms))
    for k, rule in enumerate(rules):
        if not matched[k]:
            warnings.warn(f"remap pattern {rule.pattern!r} matched no layers",
                          RuntimeWarning, stacklevel=2)
    return PipelineGraph(layers=tuple(layers), preprocessing=graph.preprocessing)


# -- reporting ------------------------------------------------------------------------

def _side(graph: PipelineGraph, size_class: str) -> dict:
    total, per_unit = total_latency(graph)
    latency, fps, fraction = end_to_end(graph, size_class)
    return {
        "size_class": size_class,
        "resolution": SIZE_RESOLUTIONS.get(size_class, 0),
        "total_ms": total,
        "cpu_ms": per_unit.get("CPU", 0.0),
        "dla_ms": per_unit.get("DLA", 0.0),
        "vector_ms": per_unit.get("VECTOR", 0.0),
        "preprocessing_ms": graph.preprocessing[size_class],
        "end_to_end_ms": latency,
        "fps": fps,
        "preprocessing_fraction": fraction,
    }


@dataclass(frozen=True)
class Report:
    """Before/after analysis with fixed section and key order."""

    sections: tuple[tuple[str, tuple[tuple[str, object], ...]], ...]

    def to_dict(self) -> dict:
        return {name: dict(items) for name, items in self.sections}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["section", "key", "value"])
        for name, items in self.sections:
            for key, value in items:
                w.writerow([name, key, value])
        return out.getvalue()

    def flat(self) -> dict[tuple[str, str], str]:
        return {(name, key): str(value)
                for name, items in self.sections for key, value in items}


def parse_report_csv(text: str) -> dict[tuple[str, str], str]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["section", "key", "value"]:
        raise ConfigError("report CSV must start with section,key,value header")
    return {(sec, key): value for sec, key, value in rows[1:]}


def report(graph_before: PipelineGraph, graph_after: PipelineGraph,
           size_class: str, rules: Iterable[RemapRule] = ()) -> Report:
    before = _side(graph_before, size_class)
    after = _side(graph_after, size_class)
    change = {
        "total_speedup": before["total_ms"] / after["total_ms"],
        "end_to_end_speedup": before["end_to_end_ms"] / after["end_to_end_ms"],
        "fps_gain": after["fps"] / before["fps"],
    }
    rule_items = tuple(
        (f"rule_{k}", f"{r.pattern} -> {r.target_unit} @ {r.speedup}x")
        for k, r in enumerate(rules, 1))
    discrepancy = (
        abs(before["end_to_end_ms"] - REFERENCE_END_TO_END_MS) > 0.5
        or abs(before["preprocessing_fraction"] - REFERENCE_PREPROCESS_FRACTION) > 0.005)
    reference = {
        "end_to_end_ms": REFERENCE_END_TO_END_MS,
        "preprocessing_fraction": REFERENCE_PREPROCESS_FRACTION,
        "documented_discrepancy": discrepancy,
        "total_speedup_small": REFERENCE_TOTAL_SPEEDUPS["small"],
        "total_speedup_medium": REFERENCE_TOTAL_SPEEDUPS["medium"],
        "total_speedup_large": REFERENCE_TOTAL_SPEEDUPS["large"],
    }
    return Report(sections=(
        ("before", tuple(before.items())),
        ("after", tuple(after.items())),
        ("change", tuple(change.items())),
        ("rules", rule_items),
        ("reference", tuple(reference.items())),
    ))
