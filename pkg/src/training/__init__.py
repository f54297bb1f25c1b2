from src.training.batch import (
    NoValidCropError,
    TrainSample,
    draw_sample,
    loss_l1,
    prepare_pair,
)
from src.training.config import (
    TrainConfig,
    TrainConfigError,
    load_train_config,
    lr_at_epoch,
)
from src.training.trainer import TrainingDivergedError, run_training
