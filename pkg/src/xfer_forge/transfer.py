"""Cross-lingual transfer by vocabulary manipulation.

SWAP replaces the token table with the target language's table while
reusing the embedding matrix row-for-row: the new token of rank i takes
the representation at row i, so specials map to specials and frequency
rank plays the role of the alignment key. Every other tensor is carried
over bit-identically; the MLM output bias is reset to zero because it
encodes source-token unigram priors that are meaningless under the new
vocabulary.

KEEP leaves the model untouched; continued pre-training then simply pairs
it with the target corpus under the source tokenizer.
"""

from __future__ import annotations

import numpy as np

from .model import Checkpoint
from .tokenizer import truncate_vocabulary

SWAP = "swap"
KEEP = "keep"
VARIANTS = (SWAP, KEEP)


def swap_vocabulary(checkpoint, new_vocab):
    """Swap to new_vocab, reusing embedding rows rank-for-rank.

    Requires an exact size match; use reconcile_sizes first when the
    sizes differ.
    """
    v = checkpoint.config.vocab_size
    if len(new_vocab) != v:
        raise ValueError(
            f"vocabulary size {len(new_vocab)} != model vocab_size {v}; "
            "reconcile sizes before swapping"
        )
    tensors = dict(checkpoint.tensors)
    tensors["mlm.output_bias"] = np.zeros_like(tensors["mlm.output_bias"])
    return Checkpoint(
        config=checkpoint.config,
        tensors=tensors,
        vocab=new_vocab,
        lineage=checkpoint.lineage + [f"swap:{new_vocab.name}"],
    )


def keep_vocabulary(checkpoint):
    """Identity on tensors and vocabulary; only lineage grows."""
    return Checkpoint(
        config=checkpoint.config,
        tensors=dict(checkpoint.tensors),
        vocab=checkpoint.vocab,
        lineage=checkpoint.lineage + ["keep"],
    )


def reconcile_sizes(checkpoint, new_vocab):
    """Truncate the larger side so |new_vocab| == model vocab_size.

    A larger vocabulary is truncated to the model's size (rank order makes
    the head of the table the right half to keep). A smaller vocabulary
    shrinks the model instead: word-embedding rows and the MLM bias beyond
    the new size are dropped. Extra rows are never invented.
    """
    v = checkpoint.config.vocab_size
    n = len(new_vocab)
    if n == v:
        return checkpoint, new_vocab
    if n > v:
        return checkpoint, truncate_vocabulary(new_vocab, v)
    if n < 5:
        raise ValueError("cannot reconcile below the 5 special tokens")
    config = checkpoint.config.__class__(
        **{**checkpoint.config.to_dict(), "vocab_size": n}
    )
    tensors = dict(checkpoint.tensors)
    tensors["embeddings.word"] = tensors["embeddings.word"][:n].copy()
    tensors["mlm.output_bias"] = tensors["mlm.output_bias"][:n].copy()
    shrunk = Checkpoint(
        config=config,
        tensors=tensors,
        vocab=truncate_vocabulary(checkpoint.vocab, n) if checkpoint.vocab else None,
        lineage=checkpoint.lineage + [f"shrink:vocab={n}"],
    )
    return shrunk, new_vocab


def apply_transfer(checkpoint, variant, new_vocab=None):
    """Run one transfer recipe; SWAP reconciles sizes first."""
    if variant == KEEP:
        return keep_vocabulary(checkpoint)
    if variant == SWAP:
        if new_vocab is None:
            raise ValueError("swap requires a target vocabulary")
        ckpt, vocab = reconcile_sizes(checkpoint, new_vocab)
        return swap_vocabulary(ckpt, vocab)
    raise ValueError(f"unknown transfer variant {variant!r}")
