"""Source-domain evaluation before and after transfer.

Each roster model is fine-tuned on the same task schema in both
languages; a model carries its own tokenizer, so a SWAP-transferred model
faces the source task through the target vocabulary -- exactly the
handicap being measured. MLM perplexity over a fixed seeded masking pass
adds a task-free forgetting probe (reported as beyond-paper).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import metrics as met
from .model import EncodedBatch, params_to_tensors
from .seeding import derive_rng
from .training import (
    MaskingPolicy,
    TrainConfig,
    _masked_lm_loss,
    _sequence_batch,
    mask_batch,
    multi_seed_finetune,
    pack_corpus,
)


@dataclass
class BidirectionalEvalPlan:
    models: dict                 # roster name -> Checkpoint
    tasks: dict                  # task key -> TaskDataset
    seeds: list
    config: TrainConfig
    metrics: dict = field(default_factory=dict)  # task key -> metric kind
    group: str = "roster"

    def validate(self):
        if len(self.models) < 2:
            raise ValueError("roster needs at least 2 models")
        kinds = {t.kind for t in self.tasks.values()}
        if len(kinds) != 1:
            raise ValueError(f"tasks must share one kind, got {sorted(kinds)}")
        for name, ckpt in self.models.items():
            if ckpt.vocab is None:
                raise ValueError(f"model {name!r} has no vocabulary attached")


def eval_bidirectional(plan, threads=1):
    """Fine-tune every roster model on every task; report scores and
    per-(task, group) deviations from the group mean."""
    plan.validate()
    scores = {}
    per_seed = {}
    for task_key, task in plan.tasks.items():
        metric = plan.metrics.get(task_key)
        for model_name, ckpt in plan.models.items():
            out = multi_seed_finetune(
                ckpt, task, plan.config, plan.seeds, metric=metric, threads=threads
            )
            scores[(task_key, model_name)] = out["aggregate"]
            per_seed[(task_key, model_name)] = out["per_seed"]
    groups = {}
    for task_key in plan.tasks:
        groups[(task_key, plan.group)] = {
            model: scores[(task_key, model)].mean for model in plan.models
        }
    deviations = met.average_difference_report(groups)
    return {"scores": scores, "per_seed": per_seed, "deviations": deviations}


def mlm_perplexity(checkpoint, corpus, mask_seed=0, max_len=128, batch_size=32,
                   policy=MaskingPolicy()):
    """exp(mean masked cross-entropy) under one deterministic masking pass."""
    vocab = checkpoint.vocab
    if vocab is None or len(vocab) != checkpoint.config.vocab_size:
        raise ValueError("checkpoint vocabulary missing or size-mismatched")
    sequences = pack_corpus(corpus, vocab, max_len)
    if not sequences:
        raise ValueError("empty corpus")
    rng = derive_rng(mask_seed, "perplexity-mask")
    params = params_to_tensors(checkpoint.tensors)
    total_loss = 0.0
    total_positions = 0
    for lo in range(0, len(sequences), batch_size):
        batch = _sequence_batch(sequences[lo : lo + batch_size])
        masked, labels = mask_batch(batch.ids, policy, rng, len(vocab))
        masked_batch = EncodedBatch(
            ids=masked, type_ids=batch.type_ids, attn_mask=batch.attn_mask
        )
        n_labels = int((labels >= 0).sum())
        if n_labels == 0:
            continue
        loss = _masked_lm_loss(params, checkpoint.config, masked_batch, labels, None)
        total_loss += float(loss.data) * n_labels
        total_positions += n_labels
    if total_positions == 0:
        raise ValueError("masking selected no positions")
    return math.exp(total_loss / total_positions)
