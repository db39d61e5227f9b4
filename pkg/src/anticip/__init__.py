"""Early action anticipation with multi-stage LSTMs, at desk scale."""

from .losses import LossKind, anticipation_loss, ce_loss, ece_loss, lgl_loss, loss_dispatch
from .mslstm import MsLstmModel, Variant, forward, infer, overall_loss, train_step

__all__ = [
    "LossKind", "MsLstmModel", "Variant", "anticipation_loss", "ce_loss", "ece_loss", "forward",
    "infer", "lgl_loss", "loss_dispatch", "overall_loss", "train_step",
]
