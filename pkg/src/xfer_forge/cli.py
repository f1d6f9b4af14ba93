"""``xfer-forge`` command line interface.

Subcommands mirror the pipeline stages so each step can also be run by
hand: gen-corpus, train-tokenizer, pretrain, transfer, finetune,
probe-structural, probe-wic, eval-forgetting, run-experiment, report.
Exit code is 0 iff every requested stage succeeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import load_task_dataset, parse_conllu, read_text_corpus, write_conllu, \
    write_task_dataset, write_text_corpus
from .forgetting import BidirectionalEvalPlan, eval_bidirectional
from .model import load_checkpoint, save_checkpoint
from .pipeline import ExperimentManifest, run_experiment
from .probing import structural_probe_report, wic_probe
from .synth import gen_synthetic_language, load_spec
from .tokenizer import load_vocab, save_tokenizer_config, save_vocab, train_wordpiece
from .training import TrainConfig, finetune, pretrain
from .transfer import apply_transfer
from ._kernels import BACKEND


def _train_config(path, seed=None, **overrides):
    d = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
    d.update(overrides)
    if seed is not None:
        d["seed"] = seed
    return TrainConfig(**d)


def _write_curve(curve, path):
    from .reports import emit_curve_csv

    emit_curve_csv(path, curve)


def cmd_gen_corpus(args):
    spec = load_spec(args.spec)
    corpus, treebank, tasks = gen_synthetic_language(
        spec, args.n_sentences, args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_text_corpus(corpus, out / "corpus.txt")
    write_conllu(treebank, out / "treebank.conllu")
    for key, ds in tasks.items():
        write_task_dataset(ds, out / f"task_{key}.jsonl")
    print(f"wrote corpus ({len(corpus)} sentences), treebank "
          f"({len(treebank)} sentences), {len(tasks)} task datasets to {out}")


def cmd_train_tokenizer(args):
    corpus = read_text_corpus(args.corpus)
    vocab = train_wordpiece(corpus, args.vocab_size, lowercase=args.lowercase)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_vocab(vocab, out / "vocab.txt")
    save_tokenizer_config(vocab, out / "tokenizer_config.json")
    print(f"trained vocabulary of {len(vocab)} tokens -> {out}/vocab.txt")


def cmd_pretrain(args):
    ckpt = load_checkpoint(args.checkpoint)
    corpus = read_text_corpus(args.corpus)
    config = _train_config(args.config, seed=args.seed)
    result = pretrain(ckpt, corpus, config)
    out = Path(args.out)
    save_checkpoint(result.checkpoint, out)
    _write_curve(result.curve, out / "loss_curve.csv")
    print(f"pretrained {len(result.curve)} steps; final loss "
          f"{result.curve[-1][1]:.4f} -> {out}")


def cmd_transfer(args):
    ckpt = load_checkpoint(args.checkpoint)
    vocab = load_vocab(args.vocab) if args.vocab else None
    out_ckpt = apply_transfer(ckpt, args.variant, vocab)
    save_checkpoint(out_ckpt, args.out)
    print(f"applied {args.variant}; lineage: {' | '.join(out_ckpt.lineage)}")


def cmd_finetune(args):
    ckpt = load_checkpoint(args.checkpoint)
    task = load_task_dataset(args.dataset)
    config = _train_config(args.config)
    result = finetune(ckpt, task, config, args.seed, metric=args.metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_curve(result.curve, out / "loss_curve.csv")
    scores = {k: v for k, v in result.split_scores.items()}
    (out / "scores.json").write_text(
        json.dumps({"metric": result.metric, "scores": scores}, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    print(f"fine-tuned on {task.name} (seed {args.seed}): "
          + ", ".join(f"{k}={v:.4f}" for k, v in scores.items()))


def cmd_probe_structural(args):
    ckpt = load_checkpoint(args.checkpoint)
    treebank = parse_conllu(args.treebank)
    cut = max(1, int(len(treebank) * args.train_fraction))
    from .corpus import Treebank

    train_bank = Treebank(treebank.name + "-train", treebank.sentences[:cut])
    eval_bank = Treebank(treebank.name + "-eval", treebank.sentences[cut:])
    report = structural_probe_report(
        ckpt, train_bank, eval_bank, layer=args.layer, rank=args.rank,
        steps=args.steps, seed=args.seed,
    )
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_probe_wic(args):
    ckpt = load_checkpoint(args.checkpoint)
    task = load_task_dataset(args.dataset)
    config = _train_config(args.config)
    seeds = list(range(1, args.seeds + 1))
    out = wic_probe(ckpt, task, config, seeds, threads=args.threads or 1)
    agg = out["aggregate"]
    print(json.dumps(
        {"mean": agg.mean, "stdev": agg.stdev,
         "per_seed": {str(s): v for s, v in out["per_seed"].items()}},
        indent=2, sort_keys=True,
    ))


def cmd_eval_forgetting(args):
    doc = json.loads(Path(args.plan).read_text(encoding="utf-8"))
    plan = BidirectionalEvalPlan(
        models={k: load_checkpoint(d) for k, d in doc["models"].items()},
        tasks={k: load_task_dataset(p) for k, p in doc["tasks"].items()},
        seeds=doc["seeds"],
        config=TrainConfig(**doc.get("config", {})),
        metrics=doc.get("metrics", {}),
    )
    result = eval_bidirectional(plan, threads=args.threads or 1)
    out = {
        "scores": {
            f"{t}|{m}": {"mean": agg.mean, "stdev": agg.stdev}
            for (t, m), agg in result["scores"].items()
        },
        "deviations": {
            f"{t}|{g}": dev for (t, g), dev in result["deviations"].items()
        },
    }
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_run_experiment(args):
    manifest = ExperimentManifest.from_file(args.manifest)
    if args.threads is not None:
        manifest.raw["threads"] = args.threads
    report_dir = run_experiment(manifest, args.out)
    print(f"experiment complete: {report_dir}")


def cmd_report(args):
    print("reports are re-emitted by re-running the manifest "
          "(cached stages are skipped):")
    cmd_run_experiment(args)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="xfer-forge",
        description="Desk-scale cross-lingual transfer laboratory "
                    f"(kernel backend: {BACKEND})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
        return p

    p = add("gen-corpus", cmd_gen_corpus, help="generate a synthetic language")
    p.add_argument("--spec", required=True)
    p.add_argument("--n-sentences", type=int, default=2000)
    p.add_argument("--out", required=True)

    p = add("train-tokenizer", cmd_train_tokenizer, help="train a WordPiece vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, default=32000)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--out", required=True)

    p = add("pretrain", cmd_pretrain, help="MLM pre-training")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", default=None, help="JSON TrainConfig overrides")
    p.add_argument("--out", required=True)

    p = add("transfer", cmd_transfer, help="swap or keep the vocabulary")
    p.add_argument("--variant", choices=["swap", "keep"], required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--out", required=True)

    p = add("finetune", cmd_finetune, help="fine-tune on a task dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--metric", default=None)
    p.add_argument("--out", required=True)

    p = add("probe-structural", cmd_probe_structural, help="structural probe")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--treebank", required=True)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--out", default=None)

    p = add("probe-wic", cmd_probe_wic, help="word-in-context probe")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seeds", type=int, default=5)

    p = add("eval-forgetting", cmd_eval_forgetting, help="source-domain evaluation")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", default=None)

    p = add("run-experiment", cmd_run_experiment, help="full manifest pipeline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = add("report", cmd_report, help="re-emit reports for a completed run")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
