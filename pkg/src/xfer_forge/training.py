"""Masking policy, MLM pre-training, AdamW, and GLUE-style fine-tuning.

Runs are deterministic: (checkpoint, data, config, seed) fixes every RNG
stream, and multi-seed fine-tuning derives one private stream per seed so
serial and parallel execution agree bit-for-bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics as met
from .autograd import Tensor, cross_entropy, gradients
from .model import (
    EncodedBatch,
    batchify,
    is_no_decay,
    mlm_logits_graph,
    params_to_tensors,
    pooled_output,
)
from .seeding import derive_rng
from .tokenizer import MASK_ID, encode


@dataclass(frozen=True)
class MaskingPolicy:
    select_prob: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1
    keep_frac: float = 0.1

    def __post_init__(self):
        if abs(self.mask_frac + self.random_frac + self.keep_frac - 1.0) > 1e-9:
            raise ValueError("mask/random/keep fractions must sum to 1")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 2e-5
    max_seq_len: int = 128
    epochs: int = 3
    max_steps: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_steps: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size <= 0 or self.learning_rate < 0 or self.max_seq_len < 8:
            raise ValueError("invalid training configuration")


# paper-scale defaults for the record; desk runs override steps and lr
PRETRAIN_DEFAULTS = TrainConfig(batch_size=128, learning_rate=5e-5, max_seq_len=128, epochs=1)
FINETUNE_DEFAULTS = TrainConfig(batch_size=32, learning_rate=2e-5, max_seq_len=128, epochs=3)


@dataclass
class RunResult:
    seed: int
    curve: list = field(default_factory=list)  # (step, loss)
    checkpoint: object = None
    head: dict | None = None
    metric: str | None = None
    split_scores: dict = field(default_factory=dict)

    @property
    def dev_score(self):
        return self.split_scores.get("dev")


def mask_batch(ids, policy, rng, vocab_size):
    """BERT masking: select 15%, then 80/10/10 mask/random/keep.

    Specials (ids 0-4) are never selected; random replacements draw
    uniformly over non-special ids. Returns (masked ids, labels) with
    label -1 at unselected positions.
    """
    selectable = ids >= 5
    u = rng.random(ids.shape)
    r = rng.random(ids.shape)
    random_ids = rng.integers(5, vocab_size, size=ids.shape)
    selected = (u < policy.select_prob) & selectable
    masked = ids.copy()
    masked[selected & (r < policy.mask_frac)] = MASK_ID
    use_random = selected & (r >= policy.mask_frac) & (r < policy.mask_frac + policy.random_frac)
    masked[use_random] = random_ids[use_random]
    labels = np.where(selected, ids, -1)
    return masked, labels


def lr_at(config, step, total_steps):
    """Linear warmup then linear decay to 0; step is 0-based."""
    base = config.learning_rate
    if config.warmup_steps > 0 and step < config.warmup_steps:
        return base * (step + 1) / config.warmup_steps
    span = max(1, total_steps - config.warmup_steps)
    return base * max(0.0, (total_steps - step) / span)


def adamw_step(params, grads, state, config, t, lr):
    """One decoupled-weight-decay Adam update; t is 1-based.

    Mutates params and state in place and returns them. Biases and
    layernorm gains never receive weight decay.
    """
    for name, theta in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name} at step {t}")
        m, v = state[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        m_hat = m / (1.0 - config.beta1**t)
        v_hat = v / (1.0 - config.beta2**t)
        theta -= (lr * m_hat / (np.sqrt(v_hat) + config.eps)).astype(theta.dtype)
        if config.weight_decay > 0 and not is_no_decay(name):
            theta -= (lr * config.weight_decay) * theta
    return params, state


def init_adamw_state(params):
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}


def pack_corpus(corpus, vocab, max_len):
    """Greedy packing: [CLS] s1 [SEP] s2 [SEP] ... up to max_len.

    Sentences are never split across sequences; a single over-long
    sentence is truncated to fit one sequence.
    """
    from .tokenizer import CLS_ID, SEP_ID, pre_tokenize

    sequences = []
    current = [CLS_ID]
    for sentence in corpus.documents:
        ids = []
        for w in pre_tokenize(sentence, lowercase=vocab.lowercase):
            ids.extend(vocab.segment_word(w))
        if not ids:
            continue
        ids = ids[: max_len - 2]
        if len(current) + len(ids) + 1 > max_len and len(current) > 1:
            sequences.append(current)
            current = [CLS_ID]
        current.extend(ids)
        current.append(SEP_ID)
    if len(current) > 1:
        sequences.append(current)
    return sequences


def _sequence_batch(seqs, dtype=np.float32):
    width = max(len(s) for s in seqs)
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=dtype)
    for r, s in enumerate(seqs):
        ids[r, : len(s)] = s
        mask[r, : len(s)] = 1.0
    return EncodedBatch(ids=ids, type_ids=np.zeros_like(ids), attn_mask=mask)


def _batch_order(n_items, batch_size, total_steps, rng):
    """Yield per-step index arrays, reshuffling each pass over the data."""
    steps = 0
    while steps < total_steps:
        order = rng.permutation(n_items)
        for lo in range(0, n_items, batch_size):
            if steps >= total_steps:
                return
            yield order[lo : lo + batch_size]
            steps += 1


def _masked_lm_loss(params, config, batch, labels, dropout_rng):
    logits = mlm_logits_graph(params, config, batch, dropout_rng=dropout_rng)
    flat_logits = logits.reshape(-1, config.vocab_size)
    flat_labels = labels.reshape(-1)
    pos = np.nonzero(flat_labels >= 0)[0]
    if pos.size == 0:
        return None
    return cross_entropy(flat_logits.take_rows(pos), flat_labels[pos])


def pretrain(checkpoint, corpus, config, policy=MaskingPolicy()):
    """MLM pre-training; returns the final checkpoint and the loss curve."""
    vocab = checkpoint.vocab
    if vocab is None or len(vocab) != checkpoint.config.vocab_size:
        raise ValueError("checkpoint vocabulary missing or size-mismatched")
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    sequences = pack_corpus(corpus, vocab, config.max_seq_len)
    if not sequences:
        raise ValueError("corpus packed to zero sequences")

    ckpt = checkpoint.clone()
    params = params_to_tensors(ckpt.tensors, trainable=True)
    arrays = ckpt.tensors
    state = init_adamw_state(arrays)
    opt_cfg = config

    steps_per_epoch = math.ceil(len(sequences) / config.batch_size)
    total = config.max_steps if config.max_steps is not None else config.epochs * steps_per_epoch
    data_rng = derive_rng(config.seed, "pretrain-data")
    mask_rng = derive_rng(config.seed, "pretrain-mask")
    drop_rng = derive_rng(config.seed, "pretrain-dropout")

    result = RunResult(seed=config.seed)
    for step, idx in enumerate(_batch_order(len(sequences), config.batch_size, total, data_rng)):
        batch = _sequence_batch([sequences[i] for i in idx])
        masked, labels = mask_batch(batch.ids, policy, mask_rng, len(vocab))
        masked_batch = EncodedBatch(ids=masked, type_ids=batch.type_ids, attn_mask=batch.attn_mask)
        for p in params.values():
            p.grad = None
        loss = _masked_lm_loss(params, ckpt.config, masked_batch, labels, drop_rng)
        if loss is None:
            grads = {k: np.zeros_like(v) for k, v in arrays.items()}
            loss_value = 0.0
        else:
            grads = gradients(loss, params)
            loss_value = float(loss.data)
        adamw_step(arrays, grads, state, opt_cfg, step + 1, lr_at(config, step, total))
        result.curve.append((step, loss_value))

    ckpt.lineage.append(f"pretrain:{corpus.name}")
    result.checkpoint = ckpt
    return result


def train_on_masked_batch(checkpoint, batch, labels, steps, config):
    """Overfit oracle: repeat one fixed masked batch for `steps` updates.

    Dropout stays off so the optimization target is deterministic.
    Returns (final checkpoint, loss curve).
    """
    ckpt = checkpoint.clone()
    params = params_to_tensors(ckpt.tensors, trainable=True)
    state = init_adamw_state(ckpt.tensors)
    curve = []
    for step in range(steps):
        for p in params.values():
            p.grad = None
        loss = _masked_lm_loss(params, ckpt.config, batch, labels, None)
        grads = gradients(loss, params)
        adamw_step(ckpt.tensors, grads, state, config, step + 1, lr_at(config, step, steps))
        curve.append((step, float(loss.data)))
    ckpt.lineage.append(f"overfit:{steps}")
    return ckpt, curve


def _init_head(hidden, n_out, seed):
    rng = derive_rng(seed, "task-head")
    return {
        "head.weight": rng.normal(0.0, 0.02, size=(hidden, n_out)).astype(np.float32),
        "head.bias": np.zeros(n_out, dtype=np.float32),
    }


def _prepare_task(task, vocab, max_len):
    """Encode every example once; returns {split: (encodings, labels)}."""
    by_split = {}
    for ex in task.examples:
        enc = encode(vocab, ex.text_a, ex.text_b if task.is_pair else None, max_len=max_len)
        by_split.setdefault(ex.split, ([], []))
        by_split[ex.split][0].append(enc)
        by_split[ex.split][1].append(ex.label)
    return by_split


def _regression_targets(labels, label_space):
    lo, hi = label_space
    return (np.asarray(labels, dtype=np.float32) - lo) / (hi - lo)


def finetune(checkpoint, task, config, seed, metric=None, prepared=None):
    """Standard fine-tuning: seeded head on the pooled [CLS] state.

    Classification minimizes cross-entropy; regression minimizes MSE on
    labels scaled to [0, 1] (predictions are rescaled for the metric).
    """
    if metric is None:
        metric = "spearman" if task.is_regression else "accuracy"
    vocab = checkpoint.vocab
    cfg = replace(config, seed=seed)
    data = prepared if prepared is not None else _prepare_task(task, vocab, cfg.max_seq_len)
    if "train" not in data or "dev" not in data:
        raise ValueError("task needs train and dev splits")
    train_enc, train_labels = data["train"]

    n_out = 1 if task.is_regression else len(task.label_space)
    if not task.is_regression:
        label_index = {lab: i for i, lab in enumerate(task.label_space)}
        targets = np.asarray([label_index[l] for l in train_labels], dtype=np.int64)
    else:
        targets = _regression_targets(train_labels, task.label_space)

    ckpt = checkpoint.clone()
    arrays = dict(ckpt.tensors)
    arrays.update(_init_head(ckpt.config.hidden, n_out, seed))
    params = params_to_tensors(arrays, trainable=True)
    state = init_adamw_state(arrays)

    steps_per_epoch = math.ceil(len(train_enc) / cfg.batch_size)
    total = cfg.max_steps if cfg.max_steps is not None else cfg.epochs * steps_per_epoch
    data_rng = derive_rng(seed, "finetune-data", task.name)
    drop_rng = derive_rng(seed, "finetune-dropout", task.name)

    result = RunResult(seed=seed, metric=metric)
    for step, idx in enumerate(_batch_order(len(train_enc), cfg.batch_size, total, data_rng)):
        batch = batchify([train_enc[i] for i in idx])
        for p in params.values():
            p.grad = None
        pooled = pooled_output(params, ckpt.config, batch, dropout_rng=drop_rng)
        out = pooled @ params["head.weight"] + params["head.bias"]
        if task.is_regression:
            diff = out.reshape(-1) - Tensor(targets[idx])
            loss = (diff * diff).mean()
        else:
            loss = cross_entropy(out, targets[idx])
        grads = gradients(loss, params)
        adamw_step(arrays, grads, state, cfg, step + 1, lr_at(cfg, step, total))
        result.curve.append((step, float(loss.data)))

    head = {k: arrays[k] for k in ("head.weight", "head.bias")}
    ckpt.tensors = {k: v for k, v in arrays.items() if not k.startswith("head.")}
    ckpt.lineage.append(f"finetune:{task.name}:seed={seed}")
    result.checkpoint = ckpt
    result.head = head

    for split, (enc, labels) in data.items():
        if split == "train" or not enc:
            continue
        preds = predict(ckpt, head, task, enc, batch_size=cfg.batch_size)
        result.split_scores[split] = met.compute_metric(metric, preds, labels)
    return result


def predict(checkpoint, head, task, encodings, batch_size=32):
    """Predicted labels (class names, or rescaled floats for regression)."""
    params = params_to_tensors(checkpoint.tensors)
    params.update(params_to_tensors(head))
    preds = []
    for lo in range(0, len(encodings), batch_size):
        batch = batchify(encodings[lo : lo + batch_size])
        pooled = pooled_output(params, checkpoint.config, batch)
        out = (pooled @ params["head.weight"] + params["head.bias"]).data
        if task.is_regression:
            lo_, hi_ = task.label_space
            preds.extend(float(x) * (hi_ - lo_) + lo_ for x in out.reshape(-1))
        else:
            preds.extend(task.label_space[int(i)] for i in out.argmax(axis=-1))
    return preds


def multi_seed_finetune(checkpoint, task, config, seeds, metric=None, threads=1):
    """Fine-tune once per seed and aggregate mean/stdev of the dev metric.

    Execution order cannot influence results: every seed derives its own
    RNG streams.
    """
    if len(seeds) < 2:
        raise ValueError("multi-seed fine-tuning needs at least 2 seeds")
    prepared = _prepare_task(task, checkpoint.vocab, config.max_seq_len)

    def run(seed):
        return finetune(checkpoint, task, config, seed, metric=metric, prepared=prepared)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    scores = [r.dev_score for r in results]
    return {
        "aggregate": met.aggregate(scores),
        "per_seed": {s: r.dev_score for s, r in zip(seeds, results)},
        "results": results,
    }
