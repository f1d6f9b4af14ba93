"""Manifest-driven experiment pipeline with content-hash resumability.

One manifest describes two synthetic languages, tokenizers, a model
shape, pre-training budgets, a transfer roster, fine-tuning tasks,
probes, and the forgetting evaluation. ``run_experiment`` executes the
stage DAG, caching each stage under out/stages/<name> keyed by a content
hash of its inputs: a re-run with an unchanged manifest retrains nothing
and re-emits byte-identical reports.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, KERNEL_BACKEND
from . import metrics as met
from . import reports as rep
from .corpus import (
    Treebank,
    load_task_dataset,
    parse_conllu,
    read_text_corpus,
    write_conllu,
    write_task_dataset,
    write_text_corpus,
)
from .forgetting import BidirectionalEvalPlan, eval_bidirectional, mlm_perplexity
from .model import ModelConfig, init_model, load_checkpoint, save_checkpoint
from .probing import structural_probe_report, wic_probe
from .synth import (
    alphabets_disjoint,
    gen_synthetic_language,
    make_language_spec,
    save_spec,
    spec_to_json,
)
from .tokenizer import (
    encode,
    load_vocab,
    save_tokenizer_config,
    save_vocab,
    train_wordpiece,
)
from .training import TrainConfig, _prepare_task, finetune, predict, pretrain
from .transfer import apply_transfer

STAGE_FORMAT = 1
GENERATED_TASKS = ("grammar", "similarity", "inference", "parity", "sense")
VARIANTS = ("source", "scratch", "swap", "keep")
TRANSFERRED = ("swap", "keep")


@dataclass(frozen=True)
class ExperimentManifest:
    raw: dict

    @classmethod
    def from_file(cls, path):
        return cls(json.loads(Path(path).read_text(encoding="utf-8"))).validated()

    @classmethod
    def from_dict(cls, raw):
        return cls(raw).validated()

    def validated(self):
        m = self.raw
        for section in ("name", "source", "target", "corpus", "tokenizer", "model",
                        "pretrain", "variants", "tasks", "finetune"):
            if section not in m:
                raise ValueError(f"manifest missing section {section!r}")
        for v in m["variants"]:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r} (choose from {VARIANTS})")
        for t in m["tasks"]:
            if t not in GENERATED_TASKS:
                raise ValueError(f"unknown task {t!r} (generated: {GENERATED_TASKS})")
        for t, metric in m["tasks"].items():
            if metric not in ("accuracy", "f1_binary", "matthews", "pearson", "spearman"):
                raise ValueError(f"task {t!r} declares unknown metric {metric!r}")
        if len(m["finetune"].get("seeds", [])) < 2:
            raise ValueError("finetune.seeds needs at least 2 seeds")
        probe_layer = m.get("probe", {}).get("layer")
        if probe_layer is not None and probe_layer > m["model"]["layers"]:
            raise ValueError("probe.layer exceeds model depth")
        # the source spec must exist before anything consumes it
        self.language_spec("source")
        self.language_spec("target")
        return self

    def language_spec(self, which):
        d = self.raw[which]
        return make_language_spec(
            d["name"], d["alphabet"], lexicon_size=d.get("lexicon_size", 600),
            seed=d.get("seed", 0),
        )

    def model_config(self, vocab_size):
        return ModelConfig(vocab_size=vocab_size, **self.raw["model"])

    def train_config(self, section, **overrides):
        d = dict(self.raw.get(section, {}))
        d.pop("seeds", None)
        d.pop("source_steps", None)
        d.pop("target_steps", None)
        d.update(overrides)
        return TrainConfig(**d)

    def hash(self):
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode("utf-8")
        ).hexdigest()


def _hash_payload(payload):
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()


class StageRunner:
    """Runs stages once, caching outputs keyed by input content hashes."""

    def __init__(self, out_dir, log=print):
        self.root = Path(out_dir) / "stages"
        self.root.mkdir(parents=True, exist_ok=True)
        self.hashes = {}
        self.log = log

    def run(self, name, payload, build, load):
        digest = _hash_payload({"stage_format": STAGE_FORMAT, "inputs": payload})
        self.hashes[name] = digest
        stage_dir = self.root / name
        marker = stage_dir / "stage.json"
        if marker.exists():
            recorded = json.loads(marker.read_text(encoding="utf-8"))
            if recorded.get("input_hash") == digest:
                self.log(f"[stage {name}] cached")
                return load(stage_dir)
        self.log(f"[stage {name}] running")
        stage_dir.mkdir(parents=True, exist_ok=True)
        try:
            build(stage_dir)
        except Exception as exc:
            raise RuntimeError(f"stage {name!r} failed: {exc}") from exc
        marker.write_text(
            json.dumps({"input_hash": digest}, indent=2) + "\n", encoding="utf-8"
        )
        return load(stage_dir)


def _save_json(path, obj):
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _agg_dict(agg):
    return {"mean": agg.mean, "stdev": agg.stdev, "values": list(agg.values)}


def model_rows(manifest):
    """Report rows in paper order: scratch baseline, source, transferred."""
    src = manifest.raw["source"]["name"]
    tgt = manifest.raw["target"]["name"]
    rows = {
        "scratch": {"key": "scratch", "lang": tgt, "vocab": tgt},
        "source": {"key": "source", "lang": src, "vocab": src},
        "keep": {"key": "keep", "lang": f"{src}->{tgt}", "vocab": src},
        "swap": {"key": "swap", "lang": f"{src}->{tgt}", "vocab": tgt},
    }
    return [rows[v] for v in ("scratch", "source", "keep", "swap")
            if v in manifest.raw["variants"]]


def _gen_language_stage(runner, manifest, which):
    spec = manifest.language_spec(which)
    corpus_cfg = manifest.raw["corpus"]
    payload = {
        "spec": spec_to_json(spec),
        "n_sentences": corpus_cfg["n_sentences"],
        "gen_seed": corpus_cfg.get("gen_seed", 0),
        "treebank_sentences": corpus_cfg.get("treebank_sentences"),
        "task_examples": corpus_cfg.get("task_examples"),
    }

    def build(stage_dir):
        corpus, treebank, tasks = gen_synthetic_language(
            spec,
            corpus_cfg["n_sentences"],
            corpus_cfg.get("gen_seed", 0),
            treebank_sentences=corpus_cfg.get("treebank_sentences"),
            task_examples=corpus_cfg.get("task_examples"),
        )
        save_spec(spec, stage_dir / "spec.json")
        write_text_corpus(corpus, stage_dir / "corpus.txt")
        write_conllu(treebank, stage_dir / "treebank.conllu")
        for key, ds in tasks.items():
            write_task_dataset(ds, stage_dir / f"task_{key}.jsonl")

    def load(stage_dir):
        corpus = read_text_corpus(stage_dir / "corpus.txt", name=spec.name)
        treebank = parse_conllu(stage_dir / "treebank.conllu", name=spec.name)
        tasks = {
            key: load_task_dataset(stage_dir / f"task_{key}.jsonl")
            for key in GENERATED_TASKS
        }
        return {"spec": spec, "corpus": corpus, "treebank": treebank, "tasks": tasks}

    return runner.run(f"gen-{which}", payload, build, load)


def _tokenizer_stage(runner, manifest, which):
    tok_cfg = manifest.raw["tokenizer"]
    payload = {
        "corpus": runner.hashes[f"gen-{which}"],
        "vocab_size": tok_cfg["vocab_size"],
        "lowercase": tok_cfg.get("lowercase", False),
    }

    def build(stage_dir):
        corpus = read_text_corpus(
            runner.root / f"gen-{which}" / "corpus.txt",
            name=manifest.raw[which]["name"],
        )
        vocab = train_wordpiece(
            corpus, tok_cfg["vocab_size"], lowercase=tok_cfg.get("lowercase", False)
        )
        save_vocab(vocab, stage_dir / "vocab.txt")
        save_tokenizer_config(vocab, stage_dir / "tokenizer_config.json")

    def load(stage_dir):
        return load_vocab(
            stage_dir / "vocab.txt",
            stage_dir / "tokenizer_config.json",
            name=manifest.raw[which]["name"],
        )

    return runner.run(f"tokenizer-{which}", payload, build, load)


def _pretrain_stage(runner, manifest, name, payload_deps, init_ckpt_fn, corpus, steps):
    pre_cfg = manifest.train_config("pretrain", max_steps=steps)
    payload = {
        "deps": payload_deps,
        "config": pre_cfg.__dict__,
        "model": manifest.raw["model"],
    }

    def build(stage_dir):
        result = pretrain(init_ckpt_fn(), corpus, pre_cfg)
        save_checkpoint(result.checkpoint, stage_dir / "checkpoint")
        rep.emit_curve_csv(stage_dir / "loss_curve.csv", result.curve)

    def load(stage_dir):
        return load_checkpoint(stage_dir / "checkpoint")

    return runner.run(name, payload, build, load)


def _finetune_stage(runner, manifest, model_key, ckpt, task_key, task, parity_task):
    ft = manifest.raw["finetune"]
    seeds = ft["seeds"]
    metric = manifest.raw["tasks"][task_key]
    ft_cfg = manifest.train_config("finetune")
    threads = manifest.raw.get("threads", 1)
    payload = {
        "model": runner.hashes[f"model-{model_key}"],
        "task": runner.hashes["gen-target"],
        "task_key": task_key,
        "metric": metric,
        "seeds": seeds,
        "config": ft_cfg.__dict__,
        "parity": parity_task is not None,
    }

    def build(stage_dir):
        prepared = _prepare_task(task, ckpt.vocab, ft_cfg.max_seq_len)
        runs = {}
        parity_runs = {}
        for seed in seeds:
            result = finetune(ckpt, task, ft_cfg, seed, metric=metric, prepared=prepared)
            runs[seed] = result.split_scores
            if parity_task is not None:
                dev = [ex for ex in parity_task.examples if ex.split == "dev"]
                encs = [
                    encode(ckpt.vocab, ex.text_a, ex.text_b, ft_cfg.max_seq_len)
                    for ex in dev
                ]
                preds = predict(result.checkpoint, result.head, parity_task, encs)
                parity_runs[seed] = met.gender_parity(
                    preds, [ex.pair_id for ex in dev], golds=[ex.label for ex in dev]
                )
        out = {"per_seed": {str(s): runs[s] for s in seeds}, "splits": {}}
        split_names = sorted({name for r in runs.values() for name in r})
        for split in split_names:
            agg = met.aggregate([runs[s][split] for s in seeds])
            out["splits"][split] = _agg_dict(agg)
        if parity_runs:
            out["parity"] = {
                "per_seed": {str(s): parity_runs[s] for s in seeds},
                "gps_mean": sum(p["gps"] for p in parity_runs.values()) / len(parity_runs),
                "accuracy_mean": sum(p["accuracy"] for p in parity_runs.values())
                / len(parity_runs),
            }
        _save_json(stage_dir / "scores.json", out)

    def load(stage_dir):
        return _load_json(stage_dir / "scores.json")

    return runner.run(f"finetune-{model_key}-{task_key}", payload, build, load)


def _treebank_split(treebank, train_fraction=0.8):
    cut = max(1, int(len(treebank) * train_fraction))
    return (
        Treebank(treebank.name + "-train", treebank.sentences[:cut]),
        Treebank(treebank.name + "-eval", treebank.sentences[cut:]),
    )


def _probe_stage(runner, manifest, model_key, ckpt, treebank):
    probe_cfg = manifest.raw.get("probe", {})
    payload = {
        "model": runner.hashes[f"model-{model_key}"],
        "treebank": runner.hashes["gen-target"],
        "probe": probe_cfg,
    }

    def build(stage_dir):
        train_bank, eval_bank = _treebank_split(treebank)
        report = structural_probe_report(
            ckpt,
            train_bank,
            eval_bank,
            layer=probe_cfg.get("layer"),
            rank=probe_cfg.get("rank"),
            steps=probe_cfg.get("steps", 1000),
            seed=probe_cfg.get("seed", 0),
        )
        report["per_length"] = {str(k): v for k, v in report["per_length"].items()}
        _save_json(stage_dir / "probe.json", report)

    def load(stage_dir):
        return _load_json(stage_dir / "probe.json")

    return runner.run(f"probe-{model_key}", payload, build, load)


def _wic_stage(runner, manifest, model_key, ckpt, sense_task):
    wic_cfg = manifest.raw.get("wic", {})
    seeds = wic_cfg.get("seeds", manifest.raw["finetune"]["seeds"])
    ft_cfg = manifest.train_config("finetune")
    payload = {
        "model": runner.hashes[f"model-{model_key}"],
        "task": runner.hashes["gen-target"],
        "seeds": seeds,
        "config": ft_cfg.__dict__,
    }

    def build(stage_dir):
        out = wic_probe(
            ckpt, sense_task, ft_cfg, seeds, threads=manifest.raw.get("threads", 1)
        )
        _save_json(
            stage_dir / "wic.json",
            {
                "aggregate": _agg_dict(out["aggregate"]),
                "per_seed": {str(s): v for s, v in out["per_seed"].items()},
            },
        )

    def load(stage_dir):
        return _load_json(stage_dir / "wic.json")

    return runner.run(f"wic-{model_key}", payload, build, load)


def _forgetting_stage(runner, manifest, models, source_data, target_data):
    fg_cfg = manifest.raw.get("forgetting", {})
    seeds = fg_cfg.get("seeds", manifest.raw["finetune"]["seeds"])
    ft_cfg = manifest.train_config("finetune")
    roster = [k for k in ("source", "keep", "swap") if k in models]
    payload = {
        "models": {k: runner.hashes[f"model-{k}"] for k in roster},
        "gen_source": runner.hashes["gen-source"],
        "gen_target": runner.hashes["gen-target"],
        "seeds": seeds,
        "config": ft_cfg.__dict__,
        "task": fg_cfg.get("task", "grammar"),
        "mask_seed": fg_cfg.get("perplexity_mask_seed", 0),
    }

    def build(stage_dir):
        task_key = fg_cfg.get("task", "grammar")
        metric = manifest.raw["tasks"].get(task_key, "accuracy")
        src_name = manifest.raw["source"]["name"]
        tgt_name = manifest.raw["target"]["name"]
        plan = BidirectionalEvalPlan(
            models={k: models[k] for k in roster},
            tasks={
                f"{task_key}-{tgt_name}": target_data["tasks"][task_key],
                f"{task_key}-{src_name}": source_data["tasks"][task_key],
            },
            seeds=seeds,
            config=ft_cfg,
            metrics={
                f"{task_key}-{tgt_name}": metric,
                f"{task_key}-{src_name}": metric,
            },
        )
        result = eval_bidirectional(plan, threads=manifest.raw.get("threads", 1))
        perplexity = {
            k: mlm_perplexity(
                models[k],
                source_data["corpus"],
                mask_seed=fg_cfg.get("perplexity_mask_seed", 0),
                max_len=manifest.train_config("pretrain").max_seq_len,
            )
            for k in roster
        }
        out = {
            "scores": {
                f"{t}|{m}": _agg_dict(agg) for (t, m), agg in result["scores"].items()
            },
            "per_seed": {
                f"{t}|{m}": {str(s): v for s, v in seeds_map.items()}
                for (t, m), seeds_map in result["per_seed"].items()
            },
            "deviations": {
                f"{t}|{g}": dev for (t, g), dev in result["deviations"].items()
            },
            "source_corpus_perplexity": perplexity,
        }
        _save_json(stage_dir / "forgetting.json", out)

    def load(stage_dir):
        return _load_json(stage_dir / "forgetting.json")

    return runner.run("forgetting", payload, build, load)


def run_experiment(manifest, out_dir, log=print):
    """Execute the full pipeline; returns the report directory path."""
    if isinstance(manifest, (str, Path)):
        manifest = ExperimentManifest.from_file(manifest)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = StageRunner(out_dir, log=log)

    src_spec = manifest.language_spec("source")
    tgt_spec = manifest.language_spec("target")
    if not alphabets_disjoint(src_spec, tgt_spec):
        log("note: source/target alphabets overlap; forgetting directions are "
            "reported but not structurally forced")

    source_data = _gen_language_stage(runner, manifest, "source")
    target_data = _gen_language_stage(runner, manifest, "target")
    src_vocab = _tokenizer_stage(runner, manifest, "source")
    tgt_vocab = _tokenizer_stage(runner, manifest, "target")

    pre = manifest.raw["pretrain"]
    src_steps = pre.get("source_steps", 400)
    tgt_steps = pre.get("target_steps", 400)
    seed = pre.get("seed", 0)
    variants = manifest.raw["variants"]

    models = {}
    if "source" in variants or any(v in variants for v in TRANSFERRED):
        models["source"] = _pretrain_stage(
            runner,
            manifest,
            "model-source",
            {"vocab": runner.hashes["tokenizer-source"],
             "corpus": runner.hashes["gen-source"], "seed": seed},
            lambda: init_model(
                manifest.model_config(len(src_vocab)), seed, vocab=src_vocab
            ),
            source_data["corpus"],
            src_steps,
        )
    if "scratch" in variants:
        models["scratch"] = _pretrain_stage(
            runner,
            manifest,
            "model-scratch",
            {"vocab": runner.hashes["tokenizer-target"],
             "corpus": runner.hashes["gen-target"], "seed": seed + 1},
            lambda: init_model(
                manifest.model_config(len(tgt_vocab)), seed + 1, vocab=tgt_vocab
            ),
            target_data["corpus"],
            tgt_steps,
        )
    if "swap" in variants:
        models["swap"] = _pretrain_stage(
            runner,
            manifest,
            "model-swap",
            {"base": runner.hashes["model-source"],
             "vocab": runner.hashes["tokenizer-target"], "variant": "swap"},
            lambda: apply_transfer(models["source"], "swap", tgt_vocab),
            target_data["corpus"],
            tgt_steps,
        )
    if "keep" in variants:
        models["keep"] = _pretrain_stage(
            runner,
            manifest,
            "model-keep",
            {"base": runner.hashes["model-source"], "variant": "keep"},
            lambda: apply_transfer(models["source"], "keep"),
            target_data["corpus"],
            tgt_steps,
        )

    # fine-tune every roster model on every declared (target-language) task
    finetune_results = {}
    parity_enabled = manifest.raw.get("parity", False)
    for model_key in variants:
        for task_key in manifest.raw["tasks"]:
            parity_task = (
                target_data["tasks"]["parity"]
                if parity_enabled and task_key == "inference"
                else None
            )
            finetune_results[(model_key, task_key)] = _finetune_stage(
                runner,
                manifest,
                model_key,
                models[model_key],
                task_key,
                target_data["tasks"][task_key],
                parity_task,
            )

    probe_results = {}
    wic_results = {}
    if manifest.raw.get("probe", {}).get("enabled", True):
        for model_key in variants:
            probe_results[model_key] = _probe_stage(
                runner, manifest, model_key, models[model_key], target_data["treebank"]
            )
            wic_results[model_key] = _wic_stage(
                runner, manifest, model_key, models[model_key],
                target_data["tasks"]["sense"],
            )

    forgetting_results = None
    if manifest.raw.get("forgetting", {}).get("enabled", True) and all(
        k in models for k in ("source", "keep", "swap")
    ):
        forgetting_results = _forgetting_stage(
            runner, manifest, models, source_data, target_data
        )

    report_dir = emit_reports(
        manifest,
        out_dir,
        runner,
        finetune_results,
        probe_results,
        wic_results,
        forgetting_results,
    )
    log(f"reports written to {report_dir}")
    return report_dir


def _cell_score(result, task_key):
    """Scalar dev score, or (dev, dev_mm) pair when both exist."""
    splits = result["splits"]
    if "dev_mm" in splits:
        return (splits["dev"]["mean"], splits["dev_mm"]["mean"])
    return splits["dev"]["mean"]


def _cell_stdev(result):
    splits = result["splits"]
    if "dev_mm" in splits:
        return (splits["dev"]["stdev"], splits["dev_mm"]["stdev"])
    return splits["dev"]["stdev"]


def emit_reports(manifest, out_dir, runner, finetune_results, probe_results,
                 wic_results, forgetting_results):
    report_dir = Path(out_dir) / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    rows = model_rows(manifest)
    task_names = list(manifest.raw["tasks"])
    display = {
        t: (f"{t} (m/mm)" if any(
            "dev_mm" in finetune_results[(r["key"], t)]["splits"] for r in rows
        ) else t)
        for t in task_names
    }

    cell_scores = {
        (r["key"], display[t]): _cell_score(finetune_results[(r["key"], t)], t)
        for r in rows
        for t in task_names
    }
    display_tasks = [display[t] for t in task_names]
    averages = rep.emit_score_csv(
        report_dir / "glue_scores.csv", rows, display_tasks, cell_scores
    )
    rep.emit_score_markdown(
        report_dir / "glue_scores.md",
        f"Fine-tuning scores ({manifest.raw['name']})",
        rows,
        display_tasks,
        cell_scores,
    )
    stdev_cells = {
        (r["key"], display[t]): _cell_stdev(finetune_results[(r["key"], t)])
        for r in rows
        for t in task_names
    }
    stdev_rows = [
        [r["lang"], r["vocab"]]
        + [rep.fmt_cell(stdev_cells[(r["key"], display[t])]) for t in task_names]
        for r in rows
    ]
    rep.write_csv(
        report_dir / "glue_stdev.csv",
        ["lang", "vocab", *display_tasks],
        stdev_rows,
    )

    # Figure-2-style deltas against the from-scratch baseline
    if "scratch" in [r["key"] for r in rows]:
        baseline = {
            t: met.pair_average(_cell_score(finetune_results[("scratch", t)], t))
            for t in task_names
        }
        variant_scores = {
            r["key"]: {
                t: met.pair_average(_cell_score(finetune_results[(r["key"], t)], t))
                for t in task_names
            }
            for r in rows
            if r["key"] != "scratch"
        }
        if variant_scores:
            delta = met.delta_report(variant_scores, baseline)
            transferred = [v for v in TRANSFERRED if v in variant_scores]
            rep.emit_delta_csv(report_dir / "figure2_delta.csv", delta, transferred)

    # probe table (UUAS / DSpr / WiC accuracy)
    if probe_results:
        probe_rows = []
        for r in rows:
            p = probe_results.get(r["key"])
            w = wic_results.get(r["key"])
            probe_rows.append(
                [
                    r["lang"],
                    r["vocab"],
                    rep.fmt(p["uuas"]) if p else rep.MISSING,
                    rep.fmt(p["dspr"]) if p else rep.MISSING,
                    rep.fmt(w["aggregate"]["mean"]) if w else rep.MISSING,
                    rep.fmt(w["aggregate"]["stdev"]) if w else rep.MISSING,
                ]
            )
        rep.write_csv(
            report_dir / "probe_scores.csv",
            ["lang", "vocab", "UUAS", "DSpr", "WiC_acc", "WiC_stdev"],
            probe_rows,
        )

    # parity table (gps and accuracy are already on the 0-100 scale)
    parity_rows = []
    for r in rows:
        res = finetune_results.get((r["key"], "inference"))
        if res and "parity" in res:
            parity_rows.append(
                [
                    r["lang"],
                    r["vocab"],
                    f"{res['parity']['gps_mean']:.2f}",
                    f"{res['parity']['accuracy_mean']:.2f}",
                ]
            )
    if parity_rows:
        rep.write_csv(
            report_dir / "parity_scores.csv", ["lang", "vocab", "gps", "acc"], parity_rows
        )

    if forgetting_results:
        keys = sorted(forgetting_results["scores"])
        fg_rows = [
            [key.split("|")[0], key.split("|")[1],
             rep.fmt(forgetting_results["scores"][key]["mean"]),
             rep.fmt(forgetting_results["scores"][key]["stdev"])]
            for key in keys
        ]
        rep.write_csv(
            report_dir / "forgetting_scores.csv",
            ["task", "model", "score", "stdev"],
            fg_rows,
        )
        deviations = {
            tuple(key.split("|")): dev
            for key, dev in forgetting_results["deviations"].items()
        }
        rep.emit_deviation_csv(report_dir / "figure3_deviation.csv", deviations)
        ppl_rows = [
            [model, repr(float(v))]
            for model, v in sorted(forgetting_results["source_corpus_perplexity"].items())
        ]
        rep.write_csv(
            report_dir / "source_perplexity.csv", ["model", "perplexity"], ppl_rows
        )

    # loss curves from the pretraining stages
    curves_dir = report_dir / "loss_curves"
    curves_dir.mkdir(exist_ok=True)
    for stage in sorted(runner.root.glob("model-*/loss_curve.csv")):
        (curves_dir / f"{stage.parent.name}.csv").write_bytes(stage.read_bytes())

    provenance = {
        "manifest": manifest.raw,
        "manifest_hash": manifest.hash(),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "kernel_backend": KERNEL_BACKEND,
        "stage_hashes": dict(sorted(runner.hashes.items())),
        "cells": {
            f"{model}|{task}": {
                "stage": f"finetune-{model}-{task}",
                "seeds": manifest.raw["finetune"]["seeds"],
            }
            for (model, task) in finetune_results
        },
    }
    _save_json(report_dir / "provenance.json", provenance)
    return report_dir
