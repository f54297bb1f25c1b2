from src.nn.gradcheck import GradCheckResult, check_gradient
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
from src.nn.optim import AdamState, NonFiniteGradientError, adam_update
from src.nn.weights import (
    BadMagicError,
    DuplicateTensorError,
    ModelWeights,
    TruncatedWeightsError,
    WeightFileError,
    load_weights,
    save_weights,
)
