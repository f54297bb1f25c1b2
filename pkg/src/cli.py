import logging
import os
import sys
from typing import List, Optional

import click

from src.baselines.classical import classical_warp
from src.geometry.spec_file import load_transform
from src.ltew.model import LTEW, MissingWeightsError
from src.ltew.warp import freq_dump, warp_image
from src.nn.optim import NonFiniteGradientError
from src.nn.weights import load_weights
from src.training.config import load_train_config
from src.training.grad_suite import run_grad_checks
from src.training.trainer import TrainingDivergedError, run_training
from src.utils.image_io import (
    ImageSizeMismatchError,
    load_optional_mask,
    read_image,
    write_image,
    write_mask,
)
from src.utils.metrics import masked_psnr, metric_report, psnr

# domain errors are ValueError subclasses; reported as a message and exit status 1
HANDLED_ERRORS = (ValueError, TrainingDivergedError, NonFiniteGradientError, OSError)

existing_file = click.Path(exists=True, dir_okay=False)


def _load_model(path: str) -> LTEW:
    return LTEW(load_weights(path))


def _parse_cells(text: Optional[str]):
    if text is None:
        return None
    try:
        y0, y1, x0, x1 = (int(part) for part in text.split(","))
    except ValueError:
        raise click.BadParameter("expected four integers y0,y1,x0,x1") from None
    return y0, y1, x0, x1


@click.group()
def cli():
    """Continuous image warping with local texture estimation."""


@cli.command()
@click.option("--input", "input_path", required=True, type=existing_file)
@click.option("--transform", "transform_path", required=True, type=existing_file)
@click.option("--weights", "weights_path", type=existing_file)
@click.option("--out", "out_path", required=True)
@click.option(
    "--method",
    type=click.Choice(["ltew", "bicubic", "bilinear"]),
    default="ltew",
    show_default=True,
)
@click.option(
    "--chunk",
    type=int,
    default=None,
    help="Queries per chunk (default: LTEW_CHUNK_SIZE, 0 = one chunk).",
)
@click.option(
    "--workers", type=int, default=None, help="Worker threads (default: LTEW_WORKERS)."
)
@click.option(
    "--clamp-shape",
    is_flag=True,
    help="Clamp the Jacobian part of shape vectors to the training floor.",
)
@click.option("--mask-out", "mask_path", default=None)
def warp(
    input_path,
    transform_path,
    weights_path,
    out_path,
    method,
    chunk,
    workers,
    clamp_shape,
    mask_path,
):
    """Warp an image through a transform-spec file."""
    image = read_image(input_path)
    t = load_transform(transform_path, image.size)
    if method == "ltew":
        if weights_path is None:
            raise MissingWeightsError("--weights is required for --method ltew")
        result = warp_image(
            _load_model(weights_path),
            image,
            t,
            clamp_shape=clamp_shape,
            chunk_size=chunk,
            workers=workers,
        )
    else:
        result = classical_warp(image, t, kernel=method)
    write_image(out_path, result)
    if mask_path:
        write_mask(mask_path, result.mask)
    logging.info(
        f"Wrote {out_path} ({int(result.mask.sum())}/{result.mask.size} valid pixels)"
    )


@cli.command()
@click.option("--config", "config_path", required=True, type=existing_file)
@click.option("--out-weights", "out_weights", required=True)
def train(config_path, out_weights):
    """Train a model from a key=value config file."""
    cfg = load_train_config(config_path)
    _, trace = run_training(cfg, out_weights)
    if len(trace):
        logging.info(f"Final L1 {trace['loss'].iloc[-1]:.5f} after {len(trace)} steps")


@cli.command(name="eval")
@click.option("--gt", "gt_path", required=True, type=existing_file)
@click.option("--pred", "pred_path", required=True, type=existing_file)
@click.option("--mask", "mask_path", default=None, type=existing_file)
@click.option("--report", "report_path", required=True)
def evaluate(gt_path, pred_path, mask_path, report_path):
    """PSNR (or mPSNR with --mask) of a prediction against ground truth."""
    gt = read_image(gt_path)
    pred = read_image(pred_path)
    if gt.size != pred.size:
        raise ImageSizeMismatchError(
            f"{gt_path} is {gt.size}, {pred_path} is {pred.size}"
        )
    mask = load_optional_mask(mask_path, gt.size)
    pred.mask = mask
    value = masked_psnr(gt, pred) if mask_path else psnr(gt, pred)
    report = metric_report(
        [
            {
                "image": os.path.basename(pred_path),
                "metric": "mpsnr" if mask_path else "psnr",
                "value": value,
                "valid_px": int(mask.sum()),
            }
        ]
    )
    directory = os.path.dirname(report_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    report.to_csv(report_path, index=False)
    logging.info(
        f"{report.iloc[0]['metric']} = {value:.4f} dB over {int(mask.sum())} pixels"
    )


@cli.command(name="grad-check")
@click.option("--seed", type=int, default=0, show_default=True)
def grad_check(seed):
    """Compare every analytic gradient with finite differences."""
    results = run_grad_checks(seed)
    failed = [r.name for r in results if not r.passed()]
    if failed:
        click.echo(f"Gradient check failed for: {', '.join(failed)}", err=True)
        sys.exit(1)
    click.echo(f"All {len(results)} gradient checks passed")


@cli.command(name="freq-dump")
@click.option("--input", "input_path", required=True, type=existing_file)
@click.option("--weights", "weights_path", required=True, type=existing_file)
@click.option("--out", "out_path", required=True)
@click.option("--cells", default=None, help="Cell window y0,y1,x0,x1 (half-open).")
def freq_dump_command(input_path, weights_path, out_path, cells):
    """Write the estimated frequencies and magnitudes of each latent cell."""
    model = _load_model(weights_path)
    fourier = model.estimate_fourier(model.encode(read_image(input_path)))
    records = freq_dump(fourier, _parse_cells(cells))
    records.to_csv(out_path, index=False)
    if len(records):
        top = records.loc[records["magnitude"].idxmax()]
        logging.info(
            f"{len(records)} records; strongest at cell "
            f"({int(top.cx)}, {int(top.cy)}): "
            f"f=({top.fx:.3f}, {top.fy:.3f}) |A|={top.magnitude:.4f}"
        )


def main(argv: Optional[List[str]] = None) -> int:
    try:
        cli.main(args=argv, prog_name="ltew", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except HANDLED_ERRORS as e:
        logging.error(f"{type(e).__name__}: {e}")
        click.echo(f"Error: {e}", err=True)
        return 1
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0
    return 0
