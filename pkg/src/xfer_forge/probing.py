"""Structural probe over contextual word vectors, plus the WiC-style probe.

The structural probe learns a linear map B such that squared distances
||B(h_i - h_j)||^2 between transformed word vectors approximate gold
parse-tree path distances. Evaluation reports UUAS (gold edges recovered
by the minimum spanning tree of predicted distances, punctuation
excluded) and DSpr (Spearman correlation of predicted vs gold pair
distances, averaged over sentence-length buckets 5-50).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics as met
from .autograd import Tensor, gradients
from .model import batchify, encode_hidden
from .seeding import derive_rng
from .tokenizer import encode_pretokenized
from .training import TrainConfig, adamw_step, init_adamw_state, lr_at, multi_seed_finetune

DSPR_MIN_LEN = 5
DSPR_MAX_LEN = 50


@dataclass
class ProbeParams:
    matrix: np.ndarray  # [k, H]
    layer: int
    checkpoint_id: str = ""


@dataclass
class WordVectors:
    """One H-vector per treebank word (mean over its subword span)."""

    sentences: list          # list of [n_words, H] arrays
    treebank_indices: list   # aligned indices into the source treebank


def tree_distances(sentence):
    """Pairwise path lengths in the undirected gold tree (BFS per node)."""
    n = len(sentence)
    adj = [[] for _ in range(n)]
    for i, h in enumerate(sentence.heads):
        if h != 0:
            adj[i].append(h - 1)
            adj[h - 1].append(i)
    dist = np.zeros((n, n), dtype=np.float64)
    for start in range(n):
        seen = {start}
        frontier = [start]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        dist[start, v] = d
                        nxt.append(v)
            frontier = nxt
    return dist


def probe_distances(probe, vectors):
    """d_B(i, j) = ||B(h_i - h_j)||^2 for one sentence's word vectors."""
    b = probe.matrix
    if vectors.shape[1] != b.shape[1]:
        raise ValueError(f"vector dim {vectors.shape[1]} != probe dim {b.shape[1]}")
    t = vectors @ b.T
    sq = (t * t).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (t @ t.T)
    return np.maximum(d, 0.0)


def collect_word_vectors(checkpoint, treebank, layer, max_len=None):
    """Mean-pooled per-word hidden states at one layer.

    Sentences whose subword encoding exceeds the model's position budget
    are skipped (their treebank indices are simply absent).
    """
    max_len = max_len or checkpoint.config.max_positions
    sentences, indices = [], []
    for idx, sent in enumerate(treebank.sentences):
        enc = encode_pretokenized(checkpoint.vocab, sent.tokens, max_len=max_len)
        if enc is None or len(enc.word_spans) != len(sent):
            continue
        batch = batchify([enc])
        hidden = encode_hidden(checkpoint, batch, layer)[0]
        pooled = np.stack(
            [hidden[s:e].mean(axis=0) for s, e in enc.word_spans]
        ).astype(np.float64)
        sentences.append(pooled)
        indices.append(idx)
    return WordVectors(sentences=sentences, treebank_indices=indices)


def default_probe_layer(config):
    """Middle encoder layer (the probing layer is configurable)."""
    return (config.layers + 1) // 2


def default_probe_rank(config):
    return min(128, config.hidden)


def train_structural_probe(
    word_vectors, treebank, rank, steps=2000, lr=1e-3, batch_sentences=8, seed=0
):
    """Fit B by Adam on the per-sentence mean |d_T - d_B| loss.

    Loss per sentence is (1/n^2) sum_ij |d_T(i,j) - d_B(i,j)|, averaged
    over the batch. Deterministic per seed.
    """
    if not word_vectors.sentences:
        raise ValueError("no sentences to train the probe on")
    hidden = word_vectors.sentences[0].shape[1]
    if rank > hidden:
        raise ValueError("probe rank exceeds vector dimensionality")
    gold = [
        tree_distances(treebank.sentences[i]) for i in word_vectors.treebank_indices
    ]

    rng = derive_rng(seed, "structural-probe")
    b = (rng.normal(0.0, 0.02, size=(rank, hidden)) / np.sqrt(rank)).astype(np.float64)
    params = {"B": b}
    state = init_adamw_state(params)
    opt = TrainConfig(
        batch_size=batch_sentences, learning_rate=lr, epochs=1, weight_decay=0.0
    )

    n = len(word_vectors.sentences)
    for step in range(steps):
        idx = rng.integers(0, n, size=min(batch_sentences, n))
        bt = Tensor(params["B"], requires_grad=True)
        total = None
        for i in idx:
            h = Tensor(word_vectors.sentences[i])
            t = h @ bt.transpose((1, 0))
            sq = (t * t).sum(axis=1)
            words = h.shape[0]
            d = sq.reshape(words, 1) + sq.reshape(1, words) - 2.0 * (t @ t.transpose((1, 0)))
            diff = (d - Tensor(gold[i])).abs().sum() * (1.0 / words**2)
            total = diff if total is None else total + diff
        loss = total * (1.0 / len(idx))
        grads = gradients(loss, {"B": bt})
        adamw_step(params, grads, state, opt, step + 1, lr)
    return ProbeParams(matrix=params["B"], layer=-1)


def mst_from_distances(d):
    """Prim's algorithm from node 0 over a dense symmetric matrix.

    Deterministic: on equal keys the earlier-scanned (smaller-index)
    vertex and parent win, so ties resolve to the lexicographically
    smallest (i, j) edge.
    """
    n = d.shape[0]
    if n < 2:
        return set()
    in_tree = [False] * n
    key = d[0].astype(np.float64).copy()
    parent = [0] * n
    in_tree[0] = True
    edges = set()
    for _ in range(n - 1):
        best = -1
        for v in range(n):
            if not in_tree[v] and (best < 0 or key[v] < key[best]):
                best = v
        in_tree[best] = True
        edges.add((min(parent[best], best), max(parent[best], best)))
        for v in range(n):
            if not in_tree[v] and d[best, v] < key[v]:
                key[v] = d[best, v]
                parent[v] = best
    return edges


def gold_edges(sentence, exclude_punct=True):
    """Undirected gold edges; punctuation-incident edges are dropped."""
    keep = [
        i
        for i in range(len(sentence))
        if not (exclude_punct and sentence.upos[i] == "PUNCT")
    ]
    keep_set = set(keep)
    edges = set()
    for i, h in enumerate(sentence.heads):
        if h == 0:
            continue
        j = h - 1
        if i in keep_set and j in keep_set:
            edges.add((min(i, j), max(i, j)))
    return keep, edges


def eval_uuas(probe, word_vectors, treebank):
    """Fraction of gold edges recovered by the MST of probe distances."""
    correct = 0
    total = 0
    for vecs, idx in zip(word_vectors.sentences, word_vectors.treebank_indices):
        sent = treebank.sentences[idx]
        keep, gold = gold_edges(sent)
        if len(keep) < 2 or not gold:
            continue
        d = probe_distances(probe, vecs)
        sub = d[np.ix_(keep, keep)]
        predicted = {
            (min(keep[a], keep[b]), max(keep[a], keep[b]))
            for a, b in mst_from_distances(sub)
        }
        correct += len(predicted & gold)
        total += len(gold)
    if total == 0:
        return None
    return correct / total


def eval_dspr(probe, word_vectors, treebank):
    """Mean per-length-bucket Spearman between predicted and gold distances.

    Buckets cover sentence lengths 5-50; empty buckets are dropped. When
    no sentence falls in that range the score is undefined (None).
    """
    buckets = {}
    for vecs, idx in zip(word_vectors.sentences, word_vectors.treebank_indices):
        sent = treebank.sentences[idx]
        n = len(sent)
        if not DSPR_MIN_LEN <= n <= DSPR_MAX_LEN:
            continue
        d_b = probe_distances(probe, vecs)
        d_t = tree_distances(sent)
        iu = np.triu_indices(n, k=1)
        rho = met.spearman(d_b[iu], d_t[iu])
        if rho is None:
            continue
        buckets.setdefault(n, []).append(rho)
    if not buckets:
        return None
    per_bucket = {n: sum(v) / len(v) for n, v in buckets.items()}
    return sum(per_bucket.values()) / len(per_bucket), per_bucket


def structural_probe_report(checkpoint, train_bank, eval_bank, layer=None, rank=None,
                            steps=2000, seed=0):
    """Train on one treebank slice, evaluate UUAS and DSpr on another."""
    layer = default_probe_layer(checkpoint.config) if layer is None else layer
    rank = default_probe_rank(checkpoint.config) if rank is None else rank
    train_vecs = collect_word_vectors(checkpoint, train_bank, layer)
    probe = train_structural_probe(train_vecs, train_bank, rank, steps=steps, seed=seed)
    probe.layer = layer
    eval_vecs = collect_word_vectors(checkpoint, eval_bank, layer)
    uuas = eval_uuas(probe, eval_vecs, eval_bank)
    dspr = eval_dspr(probe, eval_vecs, eval_bank)
    per_length = {}
    if dspr is not None:
        dspr, per_length = dspr
    return {
        "uuas": uuas,
        "dspr": dspr,
        "per_length": per_length,
        "layer": layer,
        "rank": rank,
    }


def wic_probe(checkpoint, dataset, config, seeds, threads=1):
    """Pair fine-tuning accuracy on the word-sense dataset, per seed."""
    if len(set(dataset.label_space)) != 2:
        raise ValueError("WiC-style probing expects binary labels")
    return multi_seed_finetune(
        checkpoint, dataset, config, seeds, metric="accuracy", threads=threads
    )
