"""Message-passing encoders trained from scratch on numpy."""

from galign.neural.models import ARCHITECTURES, Batch, Model, backward, encode, forward
from galign.neural.optim import AdamW, clip_gradients, one_cycle_lr

__all__ = ["ARCHITECTURES", "AdamW", "Batch", "Model", "backward", "clip_gradients", "encode",
           "forward", "one_cycle_lr"]
