import numpy as np
import pandas as pd
import pytest

from src.cli import main
from src.ltew.model import init_weights
from src.nn.weights import MAGIC, save_weights
from src.utils.image_io import read_image, read_mask, write_image
from tests.conftest import TINY


@pytest.fixture
def workspace(tmp_path, rng):
    image = str(tmp_path / "in.png")
    write_image(image, rng.integers(0, 256, (8, 16, 3)) / 255.0)
    identity = tmp_path / "identity.txt"
    identity.write_text("homography 1 0 0 0 1 0 0 0 1\n")
    upscale = tmp_path / "up.txt"
    upscale.write_text("scale 2 1.5\n")
    weights = str(tmp_path / "tiny.ltew")
    save_weights(init_weights(TINY, seed=0), weights)
    return dict(
        dir=tmp_path,
        image=image,
        identity=str(identity),
        upscale=str(upscale),
        weights=weights,
    )


def test_bicubic_identity_warp_reproduces_the_file(workspace):
    out = str(workspace["dir"] / "out.png")
    code = main(
        [
            "warp",
            "--input",
            workspace["image"],
            "--transform",
            workspace["identity"],
            "--out",
            out,
            "--method",
            "bicubic",
        ]
    )
    assert code == 0
    assert np.array_equal(read_image(out).pixels, read_image(workspace["image"]).pixels)


def test_ltew_warp_writes_image_and_mask(workspace):
    out = str(workspace["dir"] / "up.png")
    mask = str(workspace["dir"] / "up_mask.png")
    code = main(
        [
            "warp",
            "--input",
            workspace["image"],
            "--transform",
            workspace["upscale"],
            "--weights",
            workspace["weights"],
            "--out",
            out,
            "--mask-out",
            mask,
            "--chunk",
            "64",
            "--workers",
            "2",
            "--clamp-shape",
        ]
    )
    assert code == 0
    assert read_image(out).pixels.shape == (12, 32, 3)
    assert read_mask(mask).all()


def test_ltew_warp_without_weights_fails(workspace, capsys):
    out = str(workspace["dir"] / "x.png")
    code = main(
        ["warp", "--input", workspace["image"], "--transform", workspace["identity"]]
        + ["--out", out]
    )
    assert code != 0
    assert "weights" in capsys.readouterr().err


def test_missing_input_file_fails(workspace):
    code = main(
        [
            "warp",
            "--input",
            str(workspace["dir"] / "nope.png"),
            "--transform",
            workspace["identity"],
            "--out",
            str(workspace["dir"] / "x.png"),
            "--method",
            "bilinear",
        ]
    )
    assert code != 0


def test_unknown_flag_fails(workspace):
    assert main(["warp", "--input", workspace["image"], "--sharpen"]) != 0
    assert main(["blur"]) != 0


def test_eval_on_identical_images_reports_infinity(workspace):
    report = str(workspace["dir"] / "report.csv")
    image = workspace["image"]
    code = main(["eval", "--gt", image, "--pred", image, "--report", report])
    assert code == 0
    assert "inf" in open(report).read()
    frame = pd.read_csv(report)
    assert list(frame.columns) == ["image", "metric", "value", "valid_px"]
    assert frame["valid_px"].iloc[0] == 128


def test_eval_with_a_mask_reports_mpsnr(workspace):
    out = str(workspace["dir"] / "shifted.png")
    mask = str(workspace["dir"] / "shifted_mask.png")
    shift = workspace["dir"] / "shift.txt"
    shift.write_text("homography 1 0 4 0 1 0 0 0 1\n")
    args = ["warp", "--input", workspace["image"], "--transform", str(shift)]
    assert main(args + ["--out", out, "--method", "bilinear", "--mask-out", mask]) == 0
    report = str(workspace["dir"] / "masked.csv")
    args = ["eval", "--gt", out, "--pred", out, "--mask", mask, "--report", report]
    assert main(args) == 0
    frame = pd.read_csv(report)
    assert frame["metric"].iloc[0] == "mpsnr"
    assert frame["valid_px"].iloc[0] == 8 * 12


@pytest.mark.parametrize("seed", ["0", "1", "2", "4"])
def test_grad_check_passes(capsys, seed):
    assert main(["grad-check", "--seed", seed]) == 0
    assert "All 28 gradient checks passed" in capsys.readouterr().out


def test_freq_dump(workspace):
    out = str(workspace["dir"] / "freq.csv")
    args = ["freq-dump", "--input", workspace["image"]]
    args += ["--weights", workspace["weights"]]
    assert main(args + ["--out", out]) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["cx", "cy", "fx", "fy", "magnitude"]
    assert len(frame) == 8 * 16 * TINY.n_freq
    assert main(args + ["--out", out, "--cells", "0,2,0,3"]) == 0
    assert len(pd.read_csv(out)) == 6 * TINY.n_freq
    assert main(args + ["--out", out, "--cells", "0,2"]) != 0


def test_train_command(workspace):
    config = workspace["dir"] / "train.cfg"
    config.write_text(
        f"dataset={workspace['image']}\nepochs=2\nbatch_size=1\nqueries=16\n"
        "crop_h=8\ncrop_w=8\nregime=identity\nchannels=4\nn_freq=3\nhidden=8\n"
        "lr_decay_epochs=1\n"
    )
    out = str(workspace["dir"] / "trained.ltew")
    assert main(["train", "--config", str(config), "--out-weights", out]) == 0
    with open(out, "rb") as file:
        assert file.read(8) == MAGIC
    trace = pd.read_csv(str(workspace["dir"] / "trained.loss.csv"))
    assert list(trace.columns) == ["step", "lr", "loss"]
    assert trace["lr"].tolist() == pytest.approx([1e-4, 5e-5])


def test_bad_train_config_fails(workspace, capsys):
    config = workspace["dir"] / "bad.cfg"
    config.write_text("epochs=lots\n")
    out = str(workspace["dir"] / "w.ltew")
    assert main(["train", "--config", str(config), "--out-weights", out]) == 1
    assert "epochs" in capsys.readouterr().err
