"""Checkpoint layout and the inference-side scorer.

A checkpoint is a directory of four files:

* ``config.json`` — model architecture plus an echo of the training
  configuration;
* ``vocab.txt`` — the vocabulary, one token per line, reserved tokens
  first;
* ``weights.pt`` — the model state dict;
* ``history.json`` — one row of training/validation metrics per epoch.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import torch

from chainbridge.model import ChainClassifier, ModelConfig
from chainbridge.vocab import Vocab, encode_chain

CONFIG_FILE = "config.json"
VOCAB_FILE = "vocab.txt"
WEIGHTS_FILE = "weights.pt"
HISTORY_FILE = "history.json"


def save_checkpoint(
    out_dir: str | Path,
    model: ChainClassifier,
    vocab: Vocab,
    train_config: Mapping,
    history: Sequence[Mapping],
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {"model": model.config.to_dict(), "train": dict(train_config)}
    (out / CONFIG_FILE).write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    vocab.save(out / VOCAB_FILE)
    torch.save(model.state_dict(), out / WEIGHTS_FILE)
    (out / HISTORY_FILE).write_text(
        json.dumps(list(history), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out


class ChainScorer:
    """Scores chains with a trained model, deterministically.

    The model is kept in eval mode and run without gradients, so the
    same chain always gets the same score within and across sessions.
    """

    def __init__(self, model: ChainClassifier, vocab: Vocab):
        self.model = model
        self.vocab = vocab
        self.model.eval()

    @property
    def max_len(self) -> int:
        return self.model.config.max_len

    def score_batch(
        self, chains: Sequence[tuple[str, str, str]], batch_size: int = 64
    ) -> list[float]:
        """Score (f1, f2, hypothesis) triples; results align with input order."""
        scores: list[float] = []
        with torch.no_grad():
            for start in range(0, len(chains), batch_size):
                batch = chains[start : start + batch_size]
                encoded = [
                    encode_chain(self.vocab, f1, f2, h, self.max_len)
                    for f1, f2, h in batch
                ]
                logits = self.model(
                    torch.tensor([e.input_ids for e in encoded]),
                    torch.tensor([e.segment_ids for e in encoded]),
                    torch.tensor([e.attention_mask for e in encoded]),
                )
                scores.extend(torch.sigmoid(logits).tolist())
        return scores

    def score(self, f1: str, f2: str, hypothesis: str) -> float:
        return self.score_batch([(f1, f2, hypothesis)])[0]


def load_checkpoint(checkpoint_dir: str | Path) -> ChainScorer:
    """Load a checkpoint directory into a ready-to-score model."""
    ckpt = Path(checkpoint_dir)
    config_path = ckpt / CONFIG_FILE
    if not config_path.is_file():
        raise ValueError(f"not a checkpoint directory (missing {CONFIG_FILE}): {ckpt}")
    config = json.loads(config_path.read_text(encoding="utf-8"))
    model_config = ModelConfig.from_dict(config["model"])
    vocab = Vocab.load(ckpt / VOCAB_FILE)
    if len(vocab) != model_config.vocab_size:
        raise ValueError(
            f"vocabulary size {len(vocab)} does not match model "
            f"vocab_size {model_config.vocab_size}"
        )
    model = ChainClassifier(model_config)
    state = torch.load(ckpt / WEIGHTS_FILE, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    return ChainScorer(model, vocab)
