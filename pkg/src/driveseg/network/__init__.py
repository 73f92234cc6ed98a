from .loss import kl_batch_loss
from .model import ModelConfig, SegNet, build_model, param_count, predict
from .train import (Checkpoint, TargetEncoder, TrainConfig, TrainingDiverged, evaluate_loss, init_model,
                    make_optimizer, train, transfer_head)

__all__ = [
    "kl_batch_loss", "ModelConfig", "SegNet", "build_model", "param_count", "predict", "Checkpoint",
    "TargetEncoder", "TrainConfig", "TrainingDiverged", "evaluate_loss", "init_model", "make_optimizer",
    "train", "transfer_head",
]
