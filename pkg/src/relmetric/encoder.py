"""
Per-token context vectors: word embedding and character-CNN features fed
through a bidirectional LSTM.
"""
from __future__ import annotations

import logging
from typing import Iterable, Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError, IngestionError
from .tensor import Tensor

logger = logging.getLogger(__name__)

PAD, UNK = 0, 1


class Vocabulary:
    """Dense string index with PAD at 0 and UNK at 1.

    Lookup tries the exact form, then the lowercased form, then UNK.
    """

    def __init__(self, items: Iterable[str] = ()):
        self.itos = ["<pad>", "<unk>"]
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        if item not in self.stoi:
            self.stoi[item] = len(self.itos)
            self.itos.append(item)
        return self.stoi[item]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, item: str) -> bool:
        return item in self.stoi

    def lookup(self, item: str) -> int:
        idx = self.stoi.get(item)
        if idx is None:
            idx = self.stoi.get(item.lower(), UNK)
        return idx

    def encode(self, items: Sequence[str]) -> np.ndarray:
        return np.array([self.lookup(s) for s in items], dtype=np.int64)

    def to_list(self) -> list[str]:
        return self.itos[2:]

    @classmethod
    def from_list(cls, items: Sequence[str]) -> "Vocabulary":
        return cls(items)


def read_embedding_file(path, dim: Optional[int] = None) -> dict[str, np.ndarray]:
    """Whitespace-separated ``token v1 ... v_dim`` lines.

    A leading ``count dim`` header line (word2vec text style) is skipped.
    """
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if lineno == 1 and len(fields) == 2 and all(f.isdigit() for f in fields):
                continue
            if dim is None:
                dim = len(fields) - 1
            if len(fields) != dim + 1:
                raise IngestionError(f"{path}:{lineno}: expected {dim} values, found {len(fields) - 1}")
            try:
                vectors[fields[0]] = np.array(fields[1:], dtype=np.float64)
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from exc
    return vectors


def load_embeddings(path, vocab: Vocabulary, dim: int, rng: np.random.Generator,
                    dtype=T.DEFAULT_DTYPE) -> Tensor:
    """Word embedding matrix with rows copied from ``path`` where available.

    Rows for words missing from the file are drawn from N(0, 0.1).
    """
    table = rng.normal(0.0, 0.1, size=(len(vocab), dim)).astype(dtype)
    found = 0
    if path is not None:
        vectors = read_embedding_file(path, dim)
        for word, idx in vocab.stoi.items():
            vec = vectors.get(word)
            if vec is None:
                vec = vectors.get(word.lower())
            if vec is not None:
                table[idx] = vec
                found += 1
        logger.info("pretrained vectors for %d of %d vocabulary entries", found, len(vocab))
    out = T.parameter(table, name="word_embeddings", dtype=dtype)
    out.pretrained = path is not None
    return out


class ContextEncoder:
    """Steps: embed words, char-CNN each word, concatenate, run a Bi-LSTM.

    Parameters are plain :class:`Tensor` leaves exposed through
    :meth:`parameters`.
    """

    def __init__(self, words: Vocabulary, chars: Vocabulary, word_dim: int = 200, char_dim: int = 25,
                 char_features: int = 50, context_dim: int = 200, char_window: int = 3,
                 dropout: float = 0.5, word_grad_scale: float = 1.0,
                 rng: Optional[np.random.Generator] = None, embeddings_path=None, dtype=T.DEFAULT_DTYPE):
        if context_dim % 2:
            raise ContractError(f"context size must be even, got {context_dim}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.words, self.chars = words, chars
        self.char_window = char_window
        self.dropout = dropout
        self.word_grad_scale = word_grad_scale
        half = context_dim // 2
        in_dim = word_dim + char_features

        def normal(*shape, name):
            return T.parameter(rng.normal(0.0, 0.1, size=shape), name=name, dtype=dtype)

        self.word_embeddings = load_embeddings(embeddings_path, words, word_dim, rng, dtype)
        self.char_embeddings = normal(len(chars), char_dim, name="char_embeddings")
        self.char_w = normal(char_features, char_window, char_dim, name="char_conv.w")
        self.char_b = normal(char_features, name="char_conv.b")
        self.lstm = {}
        for direction in ("fwd", "bwd"):
            b = rng.normal(0.0, 0.1, size=4 * half)
            b[half:2 * half] = 1.0  # forget gate
            self.lstm[direction] = (
                normal(in_dim, 4 * half, name=f"lstm_{direction}.wx"),
                normal(half, 4 * half, name=f"lstm_{direction}.wh"),
                T.parameter(b, name=f"lstm_{direction}.b", dtype=dtype),
            )

    def parameters(self) -> dict[str, Tensor]:
        params = {"word_embeddings": self.word_embeddings, "char_embeddings": self.char_embeddings,
                  "char_conv.w": self.char_w, "char_conv.b": self.char_b}
        for direction, (wx, wh, b) in self.lstm.items():
            params[f"lstm_{direction}.wx"] = wx
            params[f"lstm_{direction}.wh"] = wh
            params[f"lstm_{direction}.b"] = b
        return params

    # -- character features ---------------------------------------------
    def char_indices(self, words: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Right-padded char ids (m x L) and the number of valid windows per word."""
        t = self.char_window
        lengths = [max(len(w), t) for w in words]
        width = max(lengths)
        ids = np.full((len(words), width), PAD, dtype=np.int64)
        for k, w in enumerate(words):
            ids[k, :len(w)] = [self.chars.lookup(c) for c in w]
        return ids, np.array(lengths) - t + 1

    def char_features(self, words: Sequence[str]) -> Tensor:
        """Max-pooled character-CNN features, one row of size eta per word."""
        ids, valid = self.char_indices(words)
        emb = T.take_rows(self.char_embeddings, ids)
        conv = T.conv1d_valid(emb, self.char_w, self.char_b)
        steps = conv.shape[1]
        mask = np.where(np.arange(steps)[None, :] < valid[:, None], 0.0, -1e30)[:, :, None]
        return T.tmax(conv + mask.astype(conv.dtype), axis=1)

    def char_encode(self, word: str) -> Tensor:
        if not word:
            raise ContractError("char_encode needs a non-empty word")
        return self.char_features([word])[0]

    # -- sentence --------------------------------------------------------
    def input_rows(self, words: Sequence[str]) -> Tensor:
        emb = T.take_rows(self.word_embeddings, self.words.encode(words))
        if self.word_grad_scale != 1.0:
            emb = T.scale_grad(emb, self.word_grad_scale)
        return T.concat([emb, self.char_features(words)], axis=1)

    def encode(self, words: Sequence[str], training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        """H (n x rho): forward state concatenated with backward state per token."""
        if len(words) == 0:
            raise ContractError("cannot encode an empty sentence")
        s = self.input_rows(words)
        fwd = T.lstm(s, *self.lstm["fwd"])
        bwd = T.lstm(s, *self.lstm["bwd"], reverse=True)
        h = T.concat([fwd, bwd], axis=1)
        return T.dropout(h, self.dropout, training, rng)


def encode_sentence(tokens: Sequence[str], encoder: ContextEncoder, training: bool = False,
                    rng: Optional[np.random.Generator] = None) -> Tensor:
    return encoder.encode(tokens, training=training, rng=rng)
