"""Trainable sequence recognizer: vocabulary, model, training, checkpoints."""

from .checkpoint import CheckpointError, checkpoint_bytes, load_checkpoint, save_checkpoint
from .model import (Annotations, ArchConfig, ModelError, ModelParams, ScoredDecode,
                    cross_logprob_sums, decode_step, encode, greedy_decode,
                    init_decoder_state, init_params, loss_and_gradients, param_shapes,
                    teacher_forced_accuracy, teacher_forced_logprobs, zero_params)
from .training import TrainConfig, TrainingError, train
from .vocab import EOS_INDEX, SOS_INDEX, Vocabulary, VocabularyError, build_vocabulary

__all__ = [
    "Annotations", "ArchConfig", "CheckpointError", "EOS_INDEX", "ModelError",
    "ModelParams", "SOS_INDEX", "ScoredDecode", "TrainConfig", "TrainingError",
    "Vocabulary", "VocabularyError", "build_vocabulary", "checkpoint_bytes",
    "cross_logprob_sums", "decode_step", "encode", "greedy_decode",
    "init_decoder_state", "init_params", "load_checkpoint", "loss_and_gradients",
    "param_shapes", "save_checkpoint", "teacher_forced_accuracy",
    "teacher_forced_logprobs", "train", "zero_params",
]
