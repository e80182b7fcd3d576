"""Trainable pair scorer: autodiff engine, MLPs, losses, training loop."""

from .autodiff import Tape, TapeError, Tensor, backward
