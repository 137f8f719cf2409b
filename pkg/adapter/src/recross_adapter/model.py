"""Tiny real models: a byte-level seq2seq transformer and a pair classifier.

Everything runs in float64 on CPU so that fine-tuning at very small
learning rates produces a measurable, deterministic loss change.
"""

from __future__ import annotations

import torch
from torch import nn

from .tokenizer import BOS, EOS, PAD, VOCAB_SIZE, batch_encode, batch_targets

MAX_INPUT_LEN = 64
MAX_TARGET_LEN = 32

D_MODEL = 32


class TinySeq2Seq(nn.Module):
    """Byte-level encoder-decoder with mean-pooled instance embeddings."""

    def __init__(self, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.embed = nn.Embedding(VOCAB_SIZE, D_MODEL, padding_idx=PAD)
        self.pos = nn.Embedding(MAX_INPUT_LEN + MAX_TARGET_LEN + 2, D_MODEL)
        encoder_layer = nn.TransformerEncoderLayer(
            D_MODEL, nhead=4, dim_feedforward=64, dropout=0.0, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(encoder_layer, num_layers=1, enable_nested_tensor=False)
        decoder_layer = nn.TransformerDecoderLayer(
            D_MODEL, nhead=4, dim_feedforward=64, dropout=0.0, batch_first=True
        )
        self.decoder = nn.TransformerDecoder(decoder_layer, num_layers=1)
        self.lm_head = nn.Linear(D_MODEL, VOCAB_SIZE)
        self.double()

    def _positions(self, n: int, device) -> torch.Tensor:
        return torch.arange(n, device=device)

    def encode_states(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Last encoder layer states, (batch, seq, d)."""
        x = self.embed(ids) + self.pos(self._positions(ids.shape[1], ids.device))
        return self.encoder(x, src_key_padding_mask=mask == 0.0)

    def embed_texts(self, texts: list[str]) -> torch.Tensor:
        """Instance embeddings: mask-weighted mean over the last encoder layer."""
        ids, mask = batch_encode(texts, MAX_INPUT_LEN)
        with torch.no_grad():
            states = self.encode_states(ids, mask)
            summed = (states * mask.unsqueeze(-1)).sum(dim=1)
            counts = mask.sum(dim=1, keepdim=True).clamp(min=1.0)
        return summed / counts

    def _decode_logits(
        self, memory: torch.Tensor, memory_mask: torch.Tensor, dec_in: torch.Tensor
    ) -> torch.Tensor:
        x = self.embed(dec_in) + self.pos(self._positions(dec_in.shape[1], dec_in.device))
        causal = nn.Transformer.generate_square_subsequent_mask(dec_in.shape[1]).to(x.dtype)
        states = self.decoder(
            x,
            memory,
            tgt_mask=causal,
            memory_key_padding_mask=memory_mask == 0.0,
        )
        return self.lm_head(states)

    def sequence_losses(self, inputs: list[str], targets: list[str]) -> torch.Tensor:
        """Per-example mean token cross-entropy, shape (batch,)."""
        ids, mask = batch_encode(inputs, MAX_INPUT_LEN)
        dec_in, labels = batch_targets(targets, MAX_TARGET_LEN)
        memory = self.encode_states(ids, mask)
        logits = self._decode_logits(memory, mask, dec_in)
        flat = nn.functional.cross_entropy(
            logits.reshape(-1, VOCAB_SIZE),
            labels.reshape(-1),
            ignore_index=PAD,
            reduction="none",
        ).reshape(labels.shape)
        token_mask = (labels != PAD).to(logits.dtype)
        return (flat * token_mask).sum(dim=1) / token_mask.sum(dim=1).clamp(min=1.0)

    @torch.no_grad()
    def greedy_generate(self, inputs: list[str]) -> list[str]:
        ids, mask = batch_encode(inputs, MAX_INPUT_LEN)
        memory = self.encode_states(ids, mask)
        batch = ids.shape[0]
        dec = torch.full((batch, 1), BOS, dtype=torch.long)
        finished = torch.zeros(batch, dtype=torch.bool)
        for _ in range(MAX_TARGET_LEN):
            logits = self._decode_logits(memory, mask, dec)
            nxt = logits[:, -1, :].argmax(dim=-1)
            nxt = torch.where(finished, torch.full_like(nxt, PAD), nxt)
            dec = torch.cat([dec, nxt.unsqueeze(1)], dim=1)
            finished |= nxt == EOS
            if bool(finished.all()):
                break
        outputs = []
        for row in dec[:, 1:].tolist():
            kept = []
            for tok in row:
                if tok in (EOS, PAD):
                    break
                kept.append(tok)
            outputs.append(bytes(t for t in kept if t < 256).decode("utf-8", errors="ignore"))
        return outputs


class PairClassifier(nn.Module):
    """Cross-encoder over 'query SEP candidate' bytes with a sigmoid head."""

    SEP = "\x1e"

    def __init__(self, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed + 1)
        self.embed = nn.Embedding(VOCAB_SIZE, D_MODEL, padding_idx=PAD)
        self.pos = nn.Embedding(2 * MAX_INPUT_LEN + 4, D_MODEL)
        layer = nn.TransformerEncoderLayer(
            D_MODEL, nhead=4, dim_feedforward=64, dropout=0.0, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=1, enable_nested_tensor=False)
        self.head = nn.Linear(D_MODEL, 1)
        self.double()

    def _encode_pairs(self, pairs: list[tuple[str, str]]) -> tuple[torch.Tensor, torch.Tensor]:
        texts = [f"{q}{self.SEP}{c}" for q, c in pairs]
        return batch_encode(texts, 2 * MAX_INPUT_LEN)

    def logits(self, pairs: list[tuple[str, str]]) -> torch.Tensor:
        ids, mask = self._encode_pairs(pairs)
        x = self.embed(ids) + self.pos(torch.arange(ids.shape[1]))
        states = self.encoder(x, src_key_padding_mask=mask == 0.0)
        pooled = (states * mask.unsqueeze(-1)).sum(dim=1) / mask.sum(dim=1, keepdim=True).clamp(min=1.0)
        return self.head(pooled).squeeze(-1)

    @torch.no_grad()
    def confidences(self, pairs: list[tuple[str, str]]) -> list[float]:
        return torch.sigmoid(self.logits(pairs)).tolist()
