"""BERT-base-shaped encoder at configurable scale.

The checkpoint is a plain value: config + named f32 tensors + lineage.
The MLM decoder is tied to the word-embedding matrix structurally (there
is no decoder weight tensor to drift), with an independent output bias.
Serialization is bit-exact: little-endian f32, row-major, offsets from
manifest.json.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import tokenizer as tok
from .autograd import Tensor, apply_dropout, dropout_mask, embedding

FORMAT_VERSION = 1
ATTENTION_MASK_BIAS = -1e4


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden: int = 64
    layers: int = 2
    heads: int = 2
    intermediate: int = 256
    max_positions: int = 128
    type_vocab: int = 2
    dropout: float = 0.1
    layernorm_eps: float = 1e-12

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError("hidden must be divisible by heads")
        for name in ("vocab_size", "hidden", "layers", "heads", "intermediate",
                     "max_positions"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def desk_config(vocab_size=2000, **overrides):
    """Default desk-scale shape: full pipeline runs in minutes."""
    return ModelConfig(vocab_size=vocab_size, **overrides)


def parameter_shapes(config):
    """Named tensor table in serialization order."""
    v, h, i_, p = config.vocab_size, config.hidden, config.intermediate, config.max_positions
    shapes = {
        "embeddings.word": (v, h),
        "embeddings.position": (p, h),
        "embeddings.type": (config.type_vocab, h),
        "embeddings.norm.gain": (h,),
        "embeddings.norm.bias": (h,),
    }
    for l in range(config.layers):
        for part in ("q", "k", "v", "out"):
            shapes[f"layer{l}.attn.{part}.weight"] = (h, h)
            shapes[f"layer{l}.attn.{part}.bias"] = (h,)
        shapes[f"layer{l}.attn.norm.gain"] = (h,)
        shapes[f"layer{l}.attn.norm.bias"] = (h,)
        shapes[f"layer{l}.ffn.in.weight"] = (h, i_)
        shapes[f"layer{l}.ffn.in.bias"] = (i_,)
        shapes[f"layer{l}.ffn.out.weight"] = (i_, h)
        shapes[f"layer{l}.ffn.out.bias"] = (h,)
        shapes[f"layer{l}.ffn.norm.gain"] = (h,)
        shapes[f"layer{l}.ffn.norm.bias"] = (h,)
    shapes.update(
        {
            "mlm.transform.weight": (h, h),
            "mlm.transform.bias": (h,),
            "mlm.norm.gain": (h,),
            "mlm.norm.bias": (h,),
            "mlm.output_bias": (v,),
            "pooler.weight": (h, h),
            "pooler.bias": (h,),
        }
    )
    return shapes


def is_no_decay(name):
    """Biases and layernorm gains are excluded from weight decay."""
    return name.endswith("bias") or name.endswith(".gain")


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict
    vocab: object = None  # tokenizer.Vocabulary
    lineage: list = field(default_factory=list)

    def clone(self):
        return Checkpoint(
            config=self.config,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            vocab=self.vocab,
            lineage=list(self.lineage),
        )

    def validate_shapes(self):
        expected = parameter_shapes(self.config)
        if set(expected) != set(self.tensors):
            missing = set(expected) ^ set(self.tensors)
            raise ValueError(f"tensor names do not match config: {sorted(missing)}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(
                    f"tensor {name}: shape {self.tensors[name].shape} != {shape}"
                )


def init_model(config, seed, dtype=np.float32, vocab=None):
    """Fresh checkpoint: weights ~ N(0, 0.02), biases 0, layernorm gains 1."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    tensors = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith("bias"):
            tensors[name] = np.zeros(shape, dtype=dtype)
        elif name.endswith(".gain"):
            tensors[name] = np.ones(shape, dtype=dtype)
        else:
            tensors[name] = rng.normal(0.0, 0.02, size=shape).astype(dtype)
    return Checkpoint(
        config=config, tensors=tensors, vocab=vocab, lineage=[f"init:seed={seed}"]
    )


@dataclass
class EncodedBatch:
    ids: np.ndarray        # [B, S] int64
    type_ids: np.ndarray   # [B, S] int64
    attn_mask: np.ndarray  # [B, S] 1.0 at real positions


def batchify(encodings, pad_to=None, dtype=np.float32):
    n = len(encodings)
    width = max(len(e.ids) for e in encodings)
    if pad_to is not None:
        width = max(width, pad_to)
    ids = np.full((n, width), tok.PAD_ID, dtype=np.int64)
    type_ids = np.zeros((n, width), dtype=np.int64)
    mask = np.zeros((n, width), dtype=dtype)
    for r, e in enumerate(encodings):
        k = len(e.ids)
        ids[r, :k] = e.ids
        type_ids[r, :k] = e.type_ids
        mask[r, :k] = 1.0
    return EncodedBatch(ids=ids, type_ids=type_ids, attn_mask=mask)


def params_to_tensors(tensors, trainable=False):
    return {k: Tensor(v, requires_grad=trainable) for k, v in tensors.items()}


def _linear(params, prefix, x):
    w = params[f"{prefix}.weight"]
    b = params[f"{prefix}.bias"]
    shape = x.shape
    out = x.reshape(-1, shape[-1]) @ w + b
    return out.reshape(*shape[:-1], w.shape[-1])


def _norm(params, prefix, x, eps):
    return x.layer_norm(eps) * params[f"{prefix}.gain"] + params[f"{prefix}.bias"]


def encoder_states(params, config, batch, dropout_rng=None, upto_layer=None):
    """Hidden states [B, S, H] per layer index 0..L (0 = embedding output).

    Returns the list of Tensor states; dropout applies only when a
    generator is passed (training).
    """
    b, s = batch.ids.shape
    if s > config.max_positions:
        raise ValueError(f"sequence length {s} exceeds max_positions")
    dtype = params["embeddings.word"].dtype
    rate = config.dropout if dropout_rng is not None else 0.0

    def drop(x):
        if rate <= 0.0:
            return x
        return apply_dropout(x, dropout_mask(x.shape, rate, dropout_rng, dtype))

    pos_ids = np.arange(s)
    h = (
        embedding(params["embeddings.word"], batch.ids)
        + embedding(params["embeddings.position"], pos_ids)
        + embedding(params["embeddings.type"], batch.type_ids)
    )
    h = drop(_norm(params, "embeddings.norm", h, config.layernorm_eps))
    states = [h]

    n_layers = config.layers if upto_layer is None else upto_layer
    n_heads = config.heads
    head_dim = config.hidden // n_heads
    scale = 1.0 / math.sqrt(head_dim)
    mask_bias = ((1.0 - batch.attn_mask) * ATTENTION_MASK_BIAS).astype(dtype)
    mask_bias = mask_bias[:, None, None, :]

    for l in range(n_layers):
        def heads(x):
            return x.reshape(b, s, n_heads, head_dim).transpose((0, 2, 1, 3))

        q = heads(_linear(params, f"layer{l}.attn.q", h))
        k = heads(_linear(params, f"layer{l}.attn.k", h))
        v = heads(_linear(params, f"layer{l}.attn.v", h))
        scores = (q @ k.transpose((0, 1, 3, 2))) * scale + mask_bias
        probs = drop(scores.softmax())
        ctx = (probs @ v).transpose((0, 2, 1, 3)).reshape(b, s, config.hidden)
        h = _norm(
            params,
            f"layer{l}.attn.norm",
            h + drop(_linear(params, f"layer{l}.attn.out", ctx)),
            config.layernorm_eps,
        )
        ffn = _linear(params, f"layer{l}.ffn.in", h).gelu()
        h = _norm(
            params,
            f"layer{l}.ffn.norm",
            h + drop(_linear(params, f"layer{l}.ffn.out", ffn)),
            config.layernorm_eps,
        )
        states.append(h)
    return states


def encode_hidden(checkpoint, batch, layer):
    """Deterministic hidden states at one layer, dropout disabled."""
    if not 0 <= layer <= checkpoint.config.layers:
        raise ValueError(f"layer must be in 0..{checkpoint.config.layers}")
    params = params_to_tensors(checkpoint.tensors)
    states = encoder_states(params, checkpoint.config, batch, upto_layer=layer)
    return states[layer].data


def mlm_logits_graph(params, config, batch, dropout_rng=None):
    """MLM logits Tensor [B, S, V]: tied decoder over transformed states."""
    h = encoder_states(params, config, batch, dropout_rng=dropout_rng)[-1]
    t = _linear(params, "mlm.transform", h).gelu()
    t = _norm(params, "mlm.norm", t, config.layernorm_eps)
    flat = t.reshape(-1, config.hidden)
    logits = flat @ params["embeddings.word"].transpose((1, 0)) + params["mlm.output_bias"]
    return logits.reshape(batch.ids.shape[0], batch.ids.shape[1], config.vocab_size)


def mlm_logits(checkpoint, batch):
    if len(checkpoint.vocab or ()) and len(checkpoint.vocab) != checkpoint.config.vocab_size:
        raise ValueError("vocabulary size does not match checkpoint config")
    params = params_to_tensors(checkpoint.tensors)
    return mlm_logits_graph(params, checkpoint.config, batch).data


def pooled_output(params, config, batch, dropout_rng=None):
    """Pooler: tanh-squashed affine map of the [CLS] state."""
    h = encoder_states(params, config, batch, dropout_rng=dropout_rng)[-1]
    b, s = batch.ids.shape
    cls = h.reshape(b * s, config.hidden).take_rows(np.arange(b) * s)
    return _linear(params, "pooler", cls).tanh()


def save_checkpoint(checkpoint, directory):
    """manifest.json + weights.bin (+ vocab.txt, tokenizer_config.json)."""
    checkpoint.validate_shapes()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table = []
    offset = 0
    blobs = []
    for name in parameter_shapes(checkpoint.config):
        arr = checkpoint.tensors[name]
        if arr.dtype != np.float32:
            raise ValueError(f"checkpoints are f32-only, got {arr.dtype} for {name}")
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table.append(
            {
                "name": name,
                "dtype": "f32",
                "shape": list(arr.shape),
                "offset": offset,
                "length": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": checkpoint.config.to_dict(),
        "lineage": checkpoint.lineage,
        "tensors": table,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (directory / "weights.bin").write_bytes(b"".join(blobs))
    if checkpoint.vocab is not None:
        tok.save_vocab(checkpoint.vocab, directory / "vocab.txt")
        tok.save_tokenizer_config(checkpoint.vocab, directory / "tokenizer_config.json")


def load_checkpoint(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest["format_version"] != FORMAT_VERSION:
        raise ValueError(
            f"checkpoint format {manifest['format_version']} != {FORMAT_VERSION}"
        )
    config = ModelConfig.from_dict(manifest["config"])
    raw = (directory / "weights.bin").read_bytes()
    expected_len = sum(t["length"] for t in manifest["tensors"])
    if len(raw) != expected_len:
        raise ValueError(
            f"weights.bin length {len(raw)} != manifest total {expected_len}"
        )
    tensors = {}
    for entry in manifest["tensors"]:
        if entry["dtype"] != "f32":
            raise ValueError(f"unsupported dtype {entry['dtype']} for {entry['name']}")
        start, length = entry["offset"], entry["length"]
        arr = np.frombuffer(raw[start : start + length], dtype="<f4")
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    vocab = None
    if (directory / "vocab.txt").exists():
        vocab = tok.load_vocab(
            directory / "vocab.txt", directory / "tokenizer_config.json"
        )
    ckpt = Checkpoint(
        config=config, tensors=tensors, vocab=vocab, lineage=list(manifest["lineage"])
    )
    ckpt.validate_shapes()
    return ckpt
