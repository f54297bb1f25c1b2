from src.geometry.coords import grid_coords, in_domain, pixel_centers
from src.geometry.derivatives import (
    SHAPE_SIZE,
    clamp_shape,
    numeric_hessian_inverse,
    numeric_jacobian_inverse,
    shape_vector,
    unfold_hessian,
)
from src.geometry.sampling import (
    IN_SCALE,
    OUT_OF_SCALE,
    sample_axis_scale,
    sample_homography,
)
from src.geometry.spec_file import (
    TransformSpecError,
    load_transform,
    parse_transform_spec,
)
from src.geometry.transform import (
    AxisScale,
    ErpPerspective,
    Homography,
    SingularPointError,
    Transform,
    TransformError,
    UnsupportedTransformError,
    analytic_jacobian_inverse,
    apply_forward,
    apply_inverse,
    axis_scale,
    erp_perspective,
    identity,
)
