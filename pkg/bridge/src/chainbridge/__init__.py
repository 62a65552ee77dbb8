"""Neural scorer for two-fact reasoning chains, served over the chainlab wire protocol."""

from chainbridge.vocab import EncodedChain, Vocab, encode_chain
from chainbridge.model import ChainClassifier, ModelConfig
from chainbridge.train import TrainConfig, TrainResult, train

__all__ = [
    "ChainClassifier",
    "EncodedChain",
    "ModelConfig",
    "TrainConfig",
    "TrainResult",
    "Vocab",
    "encode_chain",
    "train",
]
