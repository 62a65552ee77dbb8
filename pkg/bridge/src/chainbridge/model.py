"""Compact transformer classifier over encoded chains.

The encoder is a small randomly initialized transformer; nothing here
depends on pretrained weights or network access.  The architecture is
deliberately interchangeable — the contract callers rely on is the
pooled-classifier shape (token/position/segment embeddings, an
encoder stack, a tanh-pooled first token, and a one- or two-layer
scoring head), not the specific encoder, so a stronger encoder can be
swapped in without touching training or serving.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters, all serializable."""

    vocab_size: int
    dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ff_dim: int = 128
    max_len: int = 64
    head_depth: int = 2
    dropout: float = 0.1
    num_segments: int = 3

    def __post_init__(self) -> None:
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if self.head_depth not in (1, 2):
            raise ValueError("head_depth must be 1 or 2")
        if self.dim % self.num_heads != 0:
            raise ValueError("dim must be divisible by num_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


class ChainClassifier(nn.Module):
    """Scores an encoded chain with a single validity logit.

    The last linear layer starts with zero weights and a configurable
    bias, so an untrained model assigns every chain exactly the same
    score — ``set_output_prior`` anchors that score to the training
    class prior.  Gradients restore expressiveness after the first
    optimizer step.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.dim)
        self.position_embedding = nn.Embedding(config.max_len, config.dim)
        self.segment_embedding = nn.Embedding(config.num_segments, config.dim)
        self.embedding_norm = nn.LayerNorm(config.dim)
        self.embedding_dropout = nn.Dropout(config.dropout)
        layer = nn.TransformerEncoderLayer(
            d_model=config.dim,
            nhead=config.num_heads,
            dim_feedforward=config.ff_dim,
            dropout=config.dropout,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=config.num_layers, enable_nested_tensor=False
        )
        self.pooler = nn.Linear(config.dim, config.dim)
        if config.head_depth == 2:
            self.hidden = nn.Linear(config.dim, config.dim)
            self.output = nn.Linear(config.dim, 1)
        else:
            self.hidden = None
            self.output = nn.Linear(config.dim, 1)
        nn.init.zeros_(self.output.weight)
        nn.init.zeros_(self.output.bias)

    def set_output_prior(self, prior: float) -> None:
        """Bias the untrained model toward scoring the class prior."""
        prior = min(max(prior, 1e-6), 1.0 - 1e-6)
        with torch.no_grad():
            self.output.bias.fill_(math.log(prior / (1.0 - prior)))

    def forward(
        self,
        input_ids: torch.Tensor,
        segment_ids: torch.Tensor,
        attention_mask: torch.Tensor,
    ) -> torch.Tensor:
        """Return one logit per chain; inputs are (batch, seq) int tensors."""
        seq_len = input_ids.shape[1]
        positions = torch.arange(seq_len, device=input_ids.device).unsqueeze(0)
        hidden = (
            self.token_embedding(input_ids)
            + self.position_embedding(positions)
            + self.segment_embedding(segment_ids)
        )
        hidden = self.embedding_dropout(self.embedding_norm(hidden))
        encoded = self.encoder(
            hidden, src_key_padding_mask=attention_mask == 0
        )
        pooled = torch.tanh(self.pooler(encoded[:, 0]))
        if self.hidden is not None:
            pooled = torch.relu(self.hidden(pooled))
        return self.output(pooled).squeeze(-1)
