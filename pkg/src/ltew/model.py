"""Local texture estimator for warping and its implicit decoder.

The network is a small convolutional encoder, two 3x3 conv estimators for
per-cell amplitudes A (2D channels) and frequencies F (2 x D), a linear phase
estimator driven by the shape vector, and a 4-layer ReLU MLP decoder. A query
at input coordinate x blends the decoded residuals of its 2x2 nearest latent
cells. Gradients are propagated by hand through this fixed topology.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.geometry.coords import pixel_centers, to_cell_index
from src.geometry.derivatives import SHAPE_SIZE
from src.nn.layers import (
    ShapeMismatchError,
    conv3x3,
    conv3x3_grad,
    cos_pi,
    cos_pi_grad,
    linear,
    linear_grad,
    relu,
    relu_grad,
    sin_pi,
    sin_pi_grad,
)
from src.nn.weights import ModelWeights
from src.utils.helpers import get_env_floats
from src.utils.image_io import ImageBuffer

ENCODER_LAYERS = 4
DECODER_LAYERS = 4
DEFAULT_SHAPE_FLOOR = (0.25, 0.0, 0.0, 0.25)


class MissingWeightsError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 64
    n_freq: int = 32
    hidden: int = 128
    # training-time Jacobian reference for phase clamping
    shape_floor: Tuple[float, ...] = field(
        default_factory=lambda: get_env_floats("LTEW_SHAPE_FLOOR", DEFAULT_SHAPE_FLOOR)
    )


def parameter_shapes(config: ModelConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    c, d, hidden = config.channels, config.n_freq, config.hidden
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    in_channels = 3
    for i in range(ENCODER_LAYERS):
        shapes[f"encoder.conv{i}.w"] = (c, in_channels, 3, 3)
        shapes[f"encoder.conv{i}.b"] = (c,)
        in_channels = c
    shapes["amp.conv.w"] = (2 * d, c, 3, 3)
    shapes["amp.conv.b"] = (2 * d,)
    shapes["freq.conv.w"] = (2 * d, c, 3, 3)
    shapes["freq.conv.b"] = (2 * d,)
    shapes["phase.linear.w"] = (d, SHAPE_SIZE)
    shapes["phase.linear.b"] = (d,)
    widths = [2 * d] + [hidden] * (DECODER_LAYERS - 1) + [3]
    for i in range(DECODER_LAYERS):
        shapes[f"decoder.layer{i}.w"] = (widths[i + 1], widths[i])
        shapes[f"decoder.layer{i}.b"] = (widths[i + 1],)
    return shapes


def init_weights(config: ModelConfig, seed: int = 0) -> ModelWeights:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    rng = np.random.default_rng(seed)
    weights: ModelWeights = OrderedDict()
    shapes = parameter_shapes(config)
    for name, shape in shapes.items():
        weight_shape = shapes[name[:-1] + "w"]
        bound = 1.0 / np.sqrt(int(np.prod(weight_shape[1:])))
        weights[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return weights


def infer_config(weights: ModelWeights) -> ModelConfig:
    needed = ("encoder.conv0.w", "phase.linear.w", "decoder.layer0.w")
    missing = [n for n in needed if n not in weights]
    if missing:
        raise MissingWeightsError(
            f"Weights lack tensors needed to infer the model: {missing}"
        )
    return ModelConfig(
        channels=int(weights["encoder.conv0.w"].shape[0]),
        n_freq=int(weights["phase.linear.w"].shape[0]),
        hidden=int(weights["decoder.layer0.w"].shape[0]),
    )


@dataclass
class FeatureField:
    """Encoder latents z, shape (N, C, h, w); one latent per input pixel."""

    z: np.ndarray

    @property
    def size(self) -> Tuple[int, int]:
        return self.z.shape[2], self.z.shape[3]

    @property
    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        """Normalized cell centers along u (width) and v (height)."""
        h, w = self.size
        return pixel_centers(w), pixel_centers(h)


@dataclass
class FourierField:
    """Per-cell amplitudes (N, 2D, h, w) and frequencies (N, 2D, h, w).

    Frequency channel k*D + d holds component k (0: u, 1: v) of pair d.
    """

    amp: np.ndarray
    freq: np.ndarray

    @property
    def n_freq(self) -> int:
        return self.amp.shape[1] // 2

    @property
    def size(self) -> Tuple[int, int]:
        return self.amp.shape[2], self.amp.shape[3]

    def pairs(self) -> np.ndarray:
        """Frequencies as (N, 2, D, h, w)."""
        n, _, h, w = self.freq.shape
        return self.freq.reshape(n, 2, self.n_freq, h, w)


def synthesize_features(amp, freq, delta, phase) -> np.ndarray:
    """A * [cos(pi(<F, delta> + p)); sin(pi(<F, delta> + p))].

    amp (..., 2D), freq (..., 2, D), delta (..., 2), phase (..., D).
    """
    amp = np.asarray(amp)
    freq = np.asarray(freq)
    delta = np.asarray(delta)
    d = freq.shape[-1]
    inner = (
        freq[..., 0, :] * delta[..., 0:1] + freq[..., 1, :] * delta[..., 1:2] + phase
    )
    return np.concatenate(
        [amp[..., :d] * cos_pi(inner), amp[..., d:] * sin_pi(inner)], axis=-1
    )


# (dv, du) offsets of the 2x2 ensemble, in fixed summation order
ENSEMBLE_CORNERS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _opposite_lengths(
    near: np.ndarray, far: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    total = near + far
    safe = np.where(total > 0.0, total, 1.0)
    w_near = np.where(total > 0.0, far / safe, 0.5)
    w_far = np.where(total > 0.0, near / safe, 0.5)
    return w_near, w_far


def ensemble_cells(x: np.ndarray, size: Tuple[int, int]):
    """The 2x2 nearest latent cells of each query, border indices clamped.

    Returns per corner (row, col, delta, weight); delta = x - x_j in input
    pixels. Weights follow the opposite-area rule, which factors into
    per-axis opposite lengths.
    """
    h, w = size
    cell = to_cell_index(x, size)
    base = np.floor(cell).astype(np.int64)
    cols = [np.clip(base[:, 0] + du, 0, w - 1) for du in (0, 1)]
    rows = [np.clip(base[:, 1] + dv, 0, h - 1) for dv in (0, 1)]
    du_delta = [cell[:, 0] - c for c in cols]
    dv_delta = [cell[:, 1] - r for r in rows]
    wu = _opposite_lengths(np.abs(du_delta[0]), np.abs(du_delta[1]))
    wv = _opposite_lengths(np.abs(dv_delta[0]), np.abs(dv_delta[1]))
    corners = []
    for dv, du in ENSEMBLE_CORNERS:
        delta = np.stack([du_delta[du], dv_delta[dv]], axis=-1)
        corners.append((rows[dv], cols[du], delta, wu[du] * wv[dv]))
    return corners


def ensemble_weights(x: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Local-ensemble coefficients, shape (Q, 4) in corner order."""
    return np.stack([corner[3] for corner in ensemble_cells(x, size)], axis=-1)


class LTEW:
    def __init__(
        self,
        weights: ModelWeights,
        config: Optional[ModelConfig] = None,
        dtype=np.float32,
    ):
        if weights is None or len(weights) == 0:
            raise MissingWeightsError("No model weights loaded")
        self.config = config if config is not None else infer_config(weights)
        self.dtype = np.dtype(dtype)
        expected = parameter_shapes(self.config)
        missing = [name for name in expected if name not in weights]
        if missing:
            raise MissingWeightsError(f"Missing tensors: {', '.join(missing)}")
        unexpected = [name for name in weights if name not in expected]
        if unexpected:
            logging.warning(f"Ignoring unexpected tensors: {', '.join(unexpected)}")
        self.params: Dict[str, np.ndarray] = OrderedDict()
        for name, shape in expected.items():
            tensor = np.asarray(weights[name])
            if tensor.shape != shape:
                raise ShapeMismatchError(
                    f"Tensor '{name}' has shape {tensor.shape}, expected {shape}"
                )
            self.params[name] = tensor.astype(self.dtype)

    @classmethod
    def random(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "LTEW":
        return cls(init_weights(config, seed), config, dtype)

    def weights(self) -> ModelWeights:
        return OrderedDict(
            (name, tensor.astype(np.float32)) for name, tensor in self.params.items()
        )

    # encoder ---------------------------------------------------------------

    def _encode_batch(self, images: np.ndarray):
        activations = [images.astype(self.dtype, copy=False)]
        pre_activations = []
        out = activations[0]
        for i in range(ENCODER_LAYERS):
            name = f"encoder.conv{i}"
            out = conv3x3(out, self.params[f"{name}.w"], self.params[f"{name}.b"])
            if i < ENCODER_LAYERS - 1:
                pre_activations.append(out)
                out = relu(out)
                activations.append(out)
        return out, (activations, pre_activations)

    def encode(self, img) -> FeatureField:
        pixels = img.pixels if isinstance(img, ImageBuffer) else np.asarray(img)
        images = np.asarray(pixels).transpose(2, 0, 1)[None]
        z, _ = self._encode_batch(images)
        return FeatureField(z)

    def _fourier_batch(self, z: np.ndarray) -> FourierField:
        amp = conv3x3(z, self.params["amp.conv.w"], self.params["amp.conv.b"])
        freq = conv3x3(z, self.params["freq.conv.w"], self.params["freq.conv.b"])
        return FourierField(amp, freq)

    def estimate_fourier(self, features: FeatureField) -> FourierField:
        if features.z.shape[1] != self.config.channels:
            raise ShapeMismatchError(
                f"Feature field has {features.z.shape[1]} channels, "
                f"model expects {self.config.channels}"
            )
        return self._fourier_batch(features.z.astype(self.dtype, copy=False))

    def estimate_phase(self, shape) -> np.ndarray:
        shape = np.asarray(shape)
        if shape.shape[-1] != SHAPE_SIZE:
            raise ShapeMismatchError(
                f"Shape vectors have {SHAPE_SIZE} entries, got {shape.shape[-1]}"
            )
        if not np.all(np.isfinite(shape)):
            raise ValueError("Shape vector has non-finite entries")
        return linear(
            shape.astype(self.dtype),
            self.params["phase.linear.w"],
            self.params["phase.linear.b"],
        )

    # decoder ---------------------------------------------------------------

    def _decode(self, feat: np.ndarray):
        inputs, pre_activations = [feat], []
        out = feat
        for i in range(DECODER_LAYERS):
            name = f"decoder.layer{i}"
            out = linear(out, self.params[f"{name}.w"], self.params[f"{name}.b"])
            if i < DECODER_LAYERS - 1:
                pre_activations.append(out)
                out = relu(out)
                inputs.append(out)
        return out, (inputs, pre_activations)

    def _decode_backward(
        self, cache, d_out: np.ndarray, grads: Dict[str, np.ndarray]
    ) -> np.ndarray:
        inputs, pre_activations = cache
        upstream = d_out
        for i in reversed(range(DECODER_LAYERS)):
            if i < DECODER_LAYERS - 1:
                upstream = relu_grad(pre_activations[i], upstream)
            name = f"decoder.layer{i}"
            upstream, dw, db = linear_grad(
                inputs[i], self.params[f"{name}.w"], self.params[f"{name}.b"], upstream
            )
            grads[f"{name}.w"] = dw
            grads[f"{name}.b"] = db
        return upstream

    # queries ---------------------------------------------------------------

    def query(
        self,
        fourier: FourierField,
        batch_index: np.ndarray,
        x: np.ndarray,
        shape: np.ndarray,
        keep: bool = False,
    ):
        """Residual RGB for queries at input coordinates x, shape (Q, 3)."""
        d = self.config.n_freq
        batch_index = np.asarray(batch_index, dtype=np.int64)
        phase = self.estimate_phase(shape)
        amp_cells = fourier.amp.transpose(0, 2, 3, 1)
        freq_cells = fourier.freq.transpose(0, 2, 3, 1)
        corners = ensemble_cells(np.asarray(x, dtype=np.float64), fourier.size)

        amps, freqs, deltas, inners, feats = [], [], [], [], []
        for row, col, delta, _ in corners:
            amp = amp_cells[batch_index, row, col]
            freq = freq_cells[batch_index, row, col].reshape(-1, 2, d)
            delta = delta.astype(self.dtype)
            inner = (
                freq[:, 0, :] * delta[:, 0:1] + freq[:, 1, :] * delta[:, 1:2] + phase
            )
            feats.append(
                np.concatenate(
                    [amp[:, :d] * cos_pi(inner), amp[:, d:] * sin_pi(inner)], axis=-1
                )
            )
            amps.append(amp)
            freqs.append(freq)
            deltas.append(delta)
            inners.append(inner)

        decoded, decode_cache = self._decode(np.concatenate(feats, axis=0))
        q = batch_index.shape[0]
        residual = np.zeros((q, 3), dtype=self.dtype)
        for i, (_, _, _, weight) in enumerate(corners):
            block = decoded[i * q : (i + 1) * q]
            residual = residual + weight[:, None].astype(self.dtype) * block
        if not keep:
            return residual
        cache = dict(
            batch_index=batch_index,
            shape=np.asarray(shape, dtype=self.dtype),
            corners=corners,
            amps=amps,
            deltas=deltas,
            inners=inners,
            decode_cache=decode_cache,
            size=fourier.size,
            n_images=fourier.amp.shape[0],
        )
        return residual, cache

    def _query_backward(
        self, cache, d_residual: np.ndarray, grads: Dict[str, np.ndarray]
    ):
        d = self.config.n_freq
        q = d_residual.shape[0]
        corners = cache["corners"]
        d_decoded = np.concatenate(
            [
                weight[:, None].astype(self.dtype) * d_residual
                for _, _, _, weight in corners
            ],
            axis=0,
        )
        d_feats = self._decode_backward(cache["decode_cache"], d_decoded, grads)

        h, w = cache["size"]
        n_images = cache["n_images"]
        d_amp_cells = np.zeros((n_images, h, w, 2 * d), dtype=self.dtype)
        d_freq_cells = np.zeros((n_images, h, w, 2 * d), dtype=self.dtype)
        d_phase = np.zeros((q, d), dtype=self.dtype)
        batch_index = cache["batch_index"]
        for i, (row, col, _, _) in enumerate(corners):
            g = d_feats[i * q : (i + 1) * q]
            amp, delta, inner = cache["amps"][i], cache["deltas"][i], cache["inners"][i]
            d_amp = np.concatenate(
                [g[:, :d] * cos_pi(inner), g[:, d:] * sin_pi(inner)], axis=-1
            )
            d_inner = cos_pi_grad(inner, amp[:, :d] * g[:, :d]) + sin_pi_grad(
                inner, amp[:, d:] * g[:, d:]
            )
            d_freq = np.concatenate(
                [d_inner * delta[:, 0:1], d_inner * delta[:, 1:2]], axis=-1
            )
            np.add.at(d_amp_cells, (batch_index, row, col), d_amp)
            np.add.at(d_freq_cells, (batch_index, row, col), d_freq)
            d_phase = d_phase + d_inner

        _, dw, db = linear_grad(
            cache["shape"],
            self.params["phase.linear.w"],
            self.params["phase.linear.b"],
            d_phase,
        )
        grads["phase.linear.w"] = dw
        grads["phase.linear.b"] = db
        return d_amp_cells.transpose(0, 3, 1, 2), d_freq_cells.transpose(0, 3, 1, 2)

    # training --------------------------------------------------------------

    def predict(self, images, batch_index, x, shape, skip, keep: bool = False):
        """Skip plus ensemble residual for a batch of NCHW images (no clipping)."""
        z, encoder_cache = self._encode_batch(np.asarray(images))
        fourier = self._fourier_batch(z)
        residual, query_cache = self.query(fourier, batch_index, x, shape, keep=True)
        pred = np.asarray(skip, dtype=self.dtype) + residual
        if not keep:
            return pred
        return pred, (z, encoder_cache, query_cache)

    def backward(self, cache, d_pred: np.ndarray) -> Dict[str, np.ndarray]:
        z, (activations, pre_activations), query_cache = cache
        grads: Dict[str, np.ndarray] = {}
        d_amp, d_freq = self._query_backward(
            query_cache, d_pred.astype(self.dtype), grads
        )
        dz_amp, grads["amp.conv.w"], grads["amp.conv.b"] = conv3x3_grad(
            z, self.params["amp.conv.w"], self.params["amp.conv.b"], d_amp
        )
        dz_freq, grads["freq.conv.w"], grads["freq.conv.b"] = conv3x3_grad(
            z, self.params["freq.conv.w"], self.params["freq.conv.b"], d_freq
        )
        upstream = dz_amp + dz_freq
        for i in reversed(range(ENCODER_LAYERS)):
            if i < ENCODER_LAYERS - 1:
                upstream = relu_grad(pre_activations[i], upstream)
            name = f"encoder.conv{i}"
            upstream, grads[f"{name}.w"], grads[f"{name}.b"] = conv3x3_grad(
                activations[i],
                self.params[f"{name}.w"],
                self.params[f"{name}.b"],
                upstream,
            )
        return OrderedDict((name, grads[name]) for name in self.params)

    def set_params(self, params: Dict[str, np.ndarray]) -> None:
        for name, tensor in params.items():
            self.params[name] = tensor.astype(self.dtype, copy=False)


def parameter_count(config: ModelConfig) -> int:
    return int(sum(np.prod(shape) for shape in parameter_shapes(config).values()))
