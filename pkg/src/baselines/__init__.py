from src.baselines.classical import (
    BICUBIC,
    BILINEAR,
    Kernel1D,
    classical_warp,
    get_kernel,
    keys_cubic,
    sample_points,
    valid_mask,
)
