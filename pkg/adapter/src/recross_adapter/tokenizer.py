"""Byte-level tokenizer: UTF-8 bytes plus PAD/BOS/EOS specials."""

from __future__ import annotations

import torch

PAD = 256
BOS = 257
EOS = 258
VOCAB_SIZE = 259


def encode_text(text: str, max_len: int) -> list[int]:
    return list(text.encode("utf-8")[:max_len])


def decode_ids(ids: list[int]) -> str:
    data = bytes(i for i in ids if i < 256)
    return data.decode("utf-8", errors="ignore")


def batch_encode(texts: list[str], max_len: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Returns (ids, mask) with PAD fill; mask is 1.0 on real tokens."""
    rows = [encode_text(t, max_len) or [EOS] for t in texts]
    width = max(len(r) for r in rows)
    ids = torch.full((len(rows), width), PAD, dtype=torch.long)
    mask = torch.zeros((len(rows), width), dtype=torch.float64)
    for i, row in enumerate(rows):
        ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        mask[i, : len(row)] = 1.0
    return ids, mask


def batch_targets(texts: list[str], max_len: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Decoder inputs (BOS ...) and labels (... EOS), PAD-aligned."""
    rows = [encode_text(t, max_len) for t in texts]
    width = max(len(r) for r in rows) + 1
    dec_in = torch.full((len(rows), width), PAD, dtype=torch.long)
    labels = torch.full((len(rows), width), PAD, dtype=torch.long)
    for i, row in enumerate(rows):
        dec_in[i, 0] = BOS
        dec_in[i, 1 : len(row) + 1] = torch.tensor(row, dtype=torch.long)
        labels[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        labels[i, len(row)] = EOS
    return dec_in, labels
