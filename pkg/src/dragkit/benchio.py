"""Benchmark sample I/O: parse, validate, and serialize region-drag
instruction files, and load the mask/image files they refer to.

A dataset directory holds one subdirectory per sample:

    <dataset>/<sample>/instructions.json
    <dataset>/<sample>/masks/<region_index>.png
    <dataset>/<sample>/image.png            (optional)

The instruction JSON carries region operations (task tag, begin/target
centroid pair, optional anchor), parallel point-operation lists, and the
two prompts. Every parse error names the offending field path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .geometry import Mask2D, Point2, centroid, mask_from_png
from .schedule import RegionOp, TaskKind

CENTROID_TOLERANCE_PX = 2.0

TASK_LABELS = {t.value: t for t in TaskKind}


class SampleFormatError(ValueError):
    """Carries the dotted path of the field that failed validation."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class RegionOpSpec:
    task: TaskKind
    begin: Point2
    target: Point2
    anchor: Optional[Point2]


@dataclass(frozen=True)
class BenchSample:
    region_operations: dict[int, RegionOpSpec]
    begin_points: list[Point2]
    target_points: list[Point2]
    background_prompt: str
    editing_prompt: str


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SampleFormatError(f"{path}.{key}" if path else key, "missing field")
    return obj[key]


def _parse_point(value: Any, path: str) -> Point2:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise SampleFormatError(path, "expected a [x, y] pair of numbers")
    if not all(math.isfinite(float(v)) for v in value):
        raise SampleFormatError(path, "coordinates must be finite")
    return Point2(float(value[0]), float(value[1]))


def _parse_region_op(value: Any, path: str) -> RegionOpSpec:
    if not isinstance(value, dict):
        raise SampleFormatError(path, "expected an object")
    task_raw = _require(value, "task", path)
    if task_raw not in TASK_LABELS:
        raise SampleFormatError(
            f"{path}.task",
            f"unknown task label {task_raw!r}; expected one of {sorted(TASK_LABELS)}",
        )
    task = TASK_LABELS[task_raw]
    cents = _require(value, "centroids", path)
    if not isinstance(cents, list) or len(cents) != 2:
        raise SampleFormatError(
            f"{path}.centroids", "expected exactly [begin, target] points"
        )
    begin = _parse_point(cents[0], f"{path}.centroids.0")
    target = _parse_point(cents[1], f"{path}.centroids.1")
    anchors = _require(value, "anchors", path)
    if task is TaskKind.ROTATION:
        if anchors is None:
            raise SampleFormatError(f"{path}.anchors", "rotation requires an anchor")
        anchor = _parse_point(anchors, f"{path}.anchors")
    else:
        if anchors is not None:
            raise SampleFormatError(
                f"{path}.anchors", f"{task.value} must have null anchors"
            )
        anchor = None
    return RegionOpSpec(task, begin, target, anchor)


def parse_sample(text: str) -> BenchSample:
    """Parse and validate one instruction JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SampleFormatError("$", f"invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SampleFormatError("$", "top level must be an object")

    raw_region = _require(doc, "region_operations", "")
    if not isinstance(raw_region, dict) or not raw_region:
        raise SampleFormatError("region_operations", "expected a non-empty object")
    region_ops: dict[int, RegionOpSpec] = {}
    for key, value in raw_region.items():
        try:
            idx = int(key)
        except ValueError:
            raise SampleFormatError(
                f"region_operations.{key}", "index must be an integer"
            ) from None
        region_ops[idx] = _parse_region_op(value, f"region_operations.{key}")

    raw_points = _require(doc, "point_operations", "")
    if not isinstance(raw_points, dict):
        raise SampleFormatError("point_operations", "expected an object")
    raw_begin = _require(raw_points, "begin_points", "point_operations")
    raw_target = _require(raw_points, "target_points", "point_operations")
    if not isinstance(raw_begin, list) or not isinstance(raw_target, list):
        raise SampleFormatError("point_operations", "point lists must be arrays")
    if len(raw_begin) != len(raw_target):
        raise SampleFormatError(
            "point_operations",
            f"begin_points has {len(raw_begin)} entries but target_points has {len(raw_target)}",
        )
    begin_points = [
        _parse_point(p, f"point_operations.begin_points.{i}") for i, p in enumerate(raw_begin)
    ]
    target_points = [
        _parse_point(p, f"point_operations.target_points.{i}")
        for i, p in enumerate(raw_target)
    ]

    background = _require(doc, "background_prompt", "")
    if not isinstance(background, str):
        raise SampleFormatError("background_prompt", "expected a string")
    editing = _require(doc, "editing_prompt", "")
    if not isinstance(editing, str):
        raise SampleFormatError("editing_prompt", "expected a string")

    return BenchSample(
        region_operations=dict(sorted(region_ops.items())),
        begin_points=begin_points,
        target_points=target_points,
        background_prompt=background,
        editing_prompt=editing,
    )


def _num(v: float):
    return int(v) if float(v).is_integer() else float(v)


def _point_json(p: Point2) -> list:
    return [_num(p.x), _num(p.y)]


def _point_text(p: Point2) -> str:
    return json.dumps(_point_json(p))


def serialize_sample(sample: BenchSample) -> str:
    """Render a sample back to JSON with fixed field order, 4-space
    indentation, and compact [x, y] point arrays; integral coordinates are
    written as integers."""
    lines = ["{", '    "region_operations": {']
    op_blocks = []
    for idx, spec in sample.region_operations.items():
        anchors = _point_text(spec.anchor) if spec.anchor is not None else "null"
        op_blocks.append(
            f'        "{idx}": {{\n'
            f'            "task": {json.dumps(spec.task.value)},\n'
            f'            "centroids": [{_point_text(spec.begin)}, {_point_text(spec.target)}],\n'
            f'            "anchors": {anchors}\n'
            f"        }}"
        )
    lines.append(",\n".join(op_blocks))
    lines.append("    },")
    begins = ", ".join(_point_text(p) for p in sample.begin_points)
    targets = ", ".join(_point_text(p) for p in sample.target_points)
    lines.append('    "point_operations": {')
    lines.append(f'        "begin_points": [{begins}],')
    lines.append(f'        "target_points": [{targets}]')
    lines.append("    },")
    lines.append(f'    "background_prompt": {json.dumps(sample.background_prompt)},')
    lines.append(f'    "editing_prompt": {json.dumps(sample.editing_prompt)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_region_ops(sample: BenchSample, masks: dict[int, Mask2D]) -> list[RegionOp]:
    """Pair parsed region operations with their loaded masks."""
    ops = []
    for idx, spec in sample.region_operations.items():
        if idx not in masks:
            raise SampleFormatError(
                f"region_operations.{idx}", "no mask supplied for this region"
            )
        ops.append(
            RegionOp(
                kind=spec.task,
                source_mask=masks[idx],
                target=spec.target,
                anchor=spec.anchor,
            )
        )
    return ops


# --- dataset validation -----------------------------------------------------


@dataclass
class SampleCheck:
    name: str
    ok: bool
    issues: list[str] = field(default_factory=list)


@dataclass
class DatasetReport:
    checks: list[SampleCheck]

    @property
    def passed(self) -> int:
        return sum(1 for c in self.checks if c.ok)

    @property
    def failed(self) -> int:
        return len(self.checks) - self.passed

    def to_json(self) -> str:
        return json.dumps(
            {
                "passed": self.passed,
                "failed": self.failed,
                "samples": [
                    {"name": c.name, "ok": c.ok, "issues": c.issues} for c in self.checks
                ],
            },
            indent=2,
        )

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.ok else "FAIL"
            lines.append(f"[{status}] {c.name}")
            for issue in c.issues:
                lines.append(f"    - {issue}")
        lines.append(f"{self.passed} passed, {self.failed} failed")
        return "\n".join(lines)


def load_sample_dir(sample_dir: Path) -> tuple[BenchSample, dict[int, Mask2D]]:
    """Load a sample directory, enforcing mask/centroid consistency."""
    text = (sample_dir / "instructions.json").read_text()
    sample = parse_sample(text)
    masks: dict[int, Mask2D] = {}
    for idx, spec in sample.region_operations.items():
        mask_path = sample_dir / "masks" / f"{idx}.png"
        if not mask_path.exists():
            raise SampleFormatError(
                f"region_operations.{idx}", f"mask file {mask_path.name} not found"
            )
        mask = mask_from_png(mask_path)
        if mask.count == 0:
            raise SampleFormatError(f"region_operations.{idx}", "mask is empty")
        c = centroid(mask)
        d = c.dist(spec.begin)
        if d > CENTROID_TOLERANCE_PX:
            raise SampleFormatError(
                f"region_operations.{idx}",
                f"mask centroid ({c.x:.1f}, {c.y:.1f}) is {d:.1f}px from the "
                f"declared begin centroid (tolerance {CENTROID_TOLERANCE_PX}px)",
            )
        masks[idx] = mask
    return sample, masks


def validate_dataset(dataset_dir: Path | str) -> DatasetReport:
    """Check every sample subdirectory; unreadable files are reported as
    failures rather than raised."""
    root = Path(dataset_dir)
    checks: list[SampleCheck] = []
    sample_dirs = sorted(
        d for d in root.iterdir() if d.is_dir() and (d / "instructions.json").exists()
    )
    for d in sample_dirs:
        check = SampleCheck(name=d.name, ok=True)
        try:
            sample, masks = load_sample_dir(d)
        except SampleFormatError as e:
            check.ok = False
            check.issues.append(str(e))
            checks.append(check)
            continue
        except OSError as e:
            check.ok = False
            check.issues.append(f"unreadable: {e}")
            checks.append(check)
            continue
        image_path = d / "image.png"
        if image_path.exists():
            try:
                from PIL import Image

                with Image.open(image_path) as img:
                    iw, ih = img.size
                for idx, m in masks.items():
                    if (m.width, m.height) != (iw, ih):
                        check.ok = False
                        check.issues.append(
                            f"mask {idx} is {m.width}x{m.height}, image is {iw}x{ih}"
                        )
            except OSError as e:
                check.ok = False
                check.issues.append(f"image unreadable: {e}")
        checks.append(check)
    return DatasetReport(checks=checks)
