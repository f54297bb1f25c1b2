from src.ltew.model import (
    LTEW,
    FeatureField,
    FourierField,
    MissingWeightsError,
    ModelConfig,
    ensemble_weights,
    init_weights,
    synthesize_features,
)
from src.ltew.warp import (
    QueryBatch,
    bilinear_skip,
    build_queries,
    freq_dump,
    local_ensemble_query,
    warp_image,
)
