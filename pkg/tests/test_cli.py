import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from dragkit.cli import main
from dragkit.engine import load_latent
from dragkit.geometry import mask_from_png, mask_to_png
from dragkit.suite import disk_mask

from .conftest import FIXTURES


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dataset(tmp_path: Path) -> Path:
    root = tmp_path / "dataset"
    a = root / "sample_a"
    (a / "masks").mkdir(parents=True)
    (a / "instructions.json").write_text((FIXTURES / "sample_a.json").read_text())
    mask_to_png(disk_mask(337, 175, 10, width=512, height=512), a / "masks" / "0.png")
    b = root / "sample_b"
    (b / "masks").mkdir(parents=True)
    (b / "instructions.json").write_text((FIXTURES / "sample_b.json").read_text())
    for idx, (cx, cy) in enumerate([(251, 52), (281, 200), (221, 335)]):
        mask_to_png(disk_mask(cx, cy, 10, width=512, height=512), b / "masks" / f"{idx}.png")
    return root


@pytest.fixture
def toy_sample(tmp_path: Path) -> Path:
    """A small 64x64 sample suitable for actually running the optimizer."""
    root = tmp_path / "toy"
    d = root / "blob"
    (d / "masks").mkdir(parents=True)
    d.joinpath("instructions.json").write_text(
        json.dumps(
            {
                "region_operations": {
                    "0": {
                        "task": "relocation",
                        "centroids": [[24, 32], [34, 32]],
                        "anchors": None,
                    }
                },
                "point_operations": {
                    "begin_points": [[24, 32]],
                    "target_points": [[34, 32]],
                },
                "background_prompt": "a blob",
                "editing_prompt": "move the blob right",
            }
        )
    )
    mask_to_png(disk_mask(24, 32, 7), d / "masks" / "0.png")
    return d


def test_validate_fixture_dataset(runner, dataset):
    result = runner.invoke(main, ["validate", str(dataset)])
    assert result.exit_code == 0, result.output
    assert "2 passed" in result.output


def test_validate_fails_on_bad_sample(runner, dataset):
    bad = json.loads((dataset / "sample_a" / "instructions.json").read_text())
    bad["region_operations"]["0"]["task"] = "scaling"
    (dataset / "sample_a" / "instructions.json").write_text(json.dumps(bad))
    result = runner.invoke(main, ["validate", str(dataset)])
    assert result.exit_code == 1
    assert "scaling" in result.output


def test_preview_k0_overlay_is_source(runner, toy_sample, tmp_path):
    out = tmp_path / "frames"
    result = runner.invoke(
        main, ["preview", str(toy_sample), "--k", "0", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    frame = np.asarray(__import__("PIL.Image", fromlist=["open"]).open(out / "op0_k000.png"))
    source = mask_from_png(toy_sample / "masks" / "0.png")
    assert np.array_equal(frame[:, :, 2] == 255, source.bits)  # blue channel
    assert np.array_equal(frame[:, :, 1] == 255, source.bits)  # green == source at k 0


def test_run_and_eval_flow(runner, toy_sample, tmp_path):
    out = tmp_path / "run"
    result = runner.invoke(main, ["run", str(toy_sample), "--out", str(out)])
    assert result.exit_code == 0, result.output
    doc = json.loads((out / "result.json").read_text())
    assert doc["iterations_run"] == 70
    assert (out / "final.dflt").exists()
    load_latent(out / "final.dflt")

    ev = runner.invoke(
        main,
        [
            "eval",
            str(toy_sample),
            "--x",
            str(out / "initial.dflt"),
            "--edited",
            str(out / "initial.dflt"),
        ],
    )
    assert ev.exit_code == 0, ev.output
    assert "IF_bg" in ev.output


def test_mask_command(runner, toy_sample, tmp_path):
    out = tmp_path / "b.png"
    result = runner.invoke(main, ["mask", str(toy_sample), "--out", str(out)])
    assert result.exit_code == 0, result.output
    mask = mask_from_png(out)
    source = mask_from_png(toy_sample / "masks" / "0.png")
    assert np.all(mask.bits[source.bits])


def test_drift_command_json(runner, tmp_path):
    out = tmp_path / "drift.json"
    result = runner.invoke(
        main, ["drift", "--solver", "rf", "--steps", "16", "--json", str(out)]
    )
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["solver"] == "rf" and doc["steps"] == 16


def test_drift_ddim_consistent_predictor(runner):
    result = runner.invoke(main, ["drift", "--solver", "ddim", "--steps", "8"])
    assert result.exit_code == 0, result.output
    doc = json.loads(result.output)
    assert doc["mae"] <= 1e-9


def test_help_lists_subcommands(runner):
    result = runner.invoke(main, ["--help"])
    for cmd in ("preview", "run", "eval", "validate", "mask", "drift", "serve"):
        assert cmd in result.output
