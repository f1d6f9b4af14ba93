"""Seeded synthetic languages with gold dependency trees and task datasets.

A language is a weighted head-marked CFG over terminal word categories
plus a lexicon generated from the language's private character alphabet.
Gold dependency trees are read off derivations: the head of a phrase is
the lexical head of its head-marked child, and every non-head child
attaches to it.

From one (spec, n_sentences, seed) triple the generator deterministically
emits a pre-training corpus, a treebank, and five task datasets:

  grammar     acceptable vs. adjacent-swap corrupted sentences (50/50)
  similarity  pair regression, label = 5 x Jaccard overlap of content words
  inference   entail / neutral / contradict pair classification
  parity      minimal pairs differing only in a pronoun, with pair_id
  sense       same/different word-sense pairs cued by a marker token
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, Example, ParsedSentence, TaskDataset, Treebank, check_tree

UPOS_BY_CATEGORY = {
    "noun": "NOUN",
    "verb": "VERB",
    "adj": "ADJ",
    "adv": "ADV",
    "det": "DET",
    "pron": "PRON",
    "neg": "PART",
    "marker": "ADV",
    "punct": "PUNCT",
}
CONTENT_CATEGORIES = frozenset({"noun", "verb", "adj"})

_STREAM = {
    "lexicon": 11,
    "corpus": 12,
    "treebank": 13,
    "grammar": 14,
    "similarity": 15,
    "inference": 16,
    "parity": 17,
    "sense": 18,
}


@dataclass(frozen=True)
class Production:
    lhs: str
    rhs: tuple[str, ...]
    head: int  # index into rhs of the head child
    weight: float


@dataclass(frozen=True)
class SyntheticLanguageSpec:
    name: str
    alphabet: str
    lexicon_size: int
    seed: int
    productions: tuple[Production, ...]

    def validate(self):
        if len(set(self.alphabet)) < 4:
            raise ValueError("alphabet needs at least 4 distinct characters")
        if self.lexicon_size < 20:
            raise ValueError("lexicon_size must be >= 20")
        nonterminals = {p.lhs for p in self.productions}
        if "S" not in nonterminals:
            raise ValueError("grammar must define the start symbol S")
        for p in self.productions:
            if not 0 <= p.head < len(p.rhs):
                raise ValueError(f"head index out of range in {p}")
            if p.weight <= 0:
                raise ValueError(f"non-positive weight in {p}")
            for sym in p.rhs:
                if sym not in nonterminals and sym not in UPOS_BY_CATEGORY:
                    raise ValueError(f"unknown symbol {sym!r} in {p}")
        # every nonterminal must be able to bottom out in terminals
        grounded = set()
        changed = True
        while changed:
            changed = False
            for p in self.productions:
                if p.lhs in grounded:
                    continue
                if all(s in UPOS_BY_CATEGORY or s in grounded for s in p.rhs):
                    grounded.add(p.lhs)
                    changed = True
        if nonterminals - grounded:
            raise ValueError(
                f"nonterminals cannot terminate: {sorted(nonterminals - grounded)}"
            )


def default_productions():
    return (
        Production("S", ("NP", "VP", "punct"), 1, 1.0),
        Production("NP", ("noun",), 0, 0.30),
        Production("NP", ("det", "noun"), 1, 0.28),
        Production("NP", ("det", "adj", "noun"), 2, 0.17),
        Production("NP", ("adj", "NP"), 1, 0.15),
        Production("NP", ("pron",), 0, 0.10),
        Production("VP", ("verb", "NP"), 0, 0.45),
        Production("VP", ("verb",), 0, 0.20),
        Production("VP", ("verb", "NP", "adv"), 0, 0.20),
        Production("VP", ("adv", "verb", "NP"), 1, 0.15),
    )


def make_language_spec(name, alphabet, lexicon_size=600, seed=0, productions=None):
    spec = SyntheticLanguageSpec(
        name=name,
        alphabet=alphabet,
        lexicon_size=lexicon_size,
        seed=seed,
        productions=tuple(productions) if productions else default_productions(),
    )
    spec.validate()
    return spec


def alphabets_disjoint(spec_a, spec_b):
    return not (set(spec_a.alphabet) & set(spec_b.alphabet))


def spec_to_json(spec):
    return {
        "name": spec.name,
        "alphabet": spec.alphabet,
        "lexicon_size": spec.lexicon_size,
        "seed": spec.seed,
        "productions": [
            {"lhs": p.lhs, "rhs": list(p.rhs), "head": p.head, "weight": p.weight}
            for p in spec.productions
        ],
    }


def spec_from_json(doc):
    return make_language_spec(
        doc["name"],
        doc["alphabet"],
        lexicon_size=doc["lexicon_size"],
        seed=doc["seed"],
        productions=[
            Production(p["lhs"], tuple(p["rhs"]), p["head"], p["weight"])
            for p in doc["productions"]
        ],
    )


def save_spec(spec, path):
    Path(path).write_text(
        json.dumps(spec_to_json(spec), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_spec(path):
    return spec_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _rng(spec, seed, stream):
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([spec.seed, seed, _STREAM[stream]]))
    )


@dataclass(frozen=True)
class Lexicon:
    words: dict  # category -> tuple of word forms

    def all_words(self):
        return [w for forms in self.words.values() for w in forms]


def build_lexicon(spec):
    """Deterministic lexicon from the spec's own seed and alphabet."""
    rng = _rng(spec, 0, "lexicon")
    alphabet = sorted(set(spec.alphabet))
    seen = set()

    def draw_word():
        for _ in range(10000):
            length = int(rng.integers(3, 9))
            word = "".join(alphabet[i] for i in rng.integers(0, len(alphabet), length))
            if word not in seen:
                seen.add(word)
                return word
        raise RuntimeError("alphabet too small to draw distinct words")

    counts = {"det": 3, "pron": 2, "neg": 1, "marker": 2}
    remaining = spec.lexicon_size - sum(counts.values())
    counts["noun"] = max(2, remaining * 50 // 100)
    counts["verb"] = max(2, remaining * 30 // 100)
    counts["adj"] = max(2, remaining * 15 // 100)
    counts["adv"] = max(2, remaining - counts["noun"] - counts["verb"] - counts["adj"])
    words = {cat: tuple(draw_word() for _ in range(k)) for cat, k in counts.items()}
    words["punct"] = (alphabet[-1],)  # single char; lexicon words are length >= 3
    return Lexicon(words=words)


class _Node:
    __slots__ = ("children", "head_idx", "form", "cat", "pos")

    def __init__(self, children=None, head_idx=0, form=None, cat=None):
        self.children = children or []
        self.head_idx = head_idx
        self.form = form
        self.cat = cat
        self.pos = -1


def _expand(spec, lexicon, by_lhs, symbol, rng, depth, max_depth):
    if depth > max_depth:
        raise RuntimeError(
            f"grammar failed to terminate (derivation depth > {max_depth})"
        )
    if symbol in UPOS_BY_CATEGORY:
        forms = lexicon.words[symbol]
        return _Node(form=forms[int(rng.integers(0, len(forms)))], cat=symbol)
    alts, cum = by_lhs[symbol]
    r = rng.random() * cum[-1]
    choice = int(np.searchsorted(cum, r, side="right"))
    prod = alts[min(choice, len(alts) - 1)]
    children = [
        _expand(spec, lexicon, by_lhs, s, rng, depth + 1, max_depth) for s in prod.rhs
    ]
    return _Node(children=children, head_idx=prod.head)


def _linearize(node, tokens, cats):
    if node.form is not None:
        node.pos = len(tokens)
        tokens.append(node.form)
        cats.append(node.cat)
        return
    for child in node.children:
        _linearize(child, tokens, cats)
    node.pos = node.children[node.head_idx].pos


def _assign_heads(node, heads):
    if node.form is not None:
        return
    for i, child in enumerate(node.children):
        _assign_heads(child, heads)
        if i != node.head_idx:
            heads[child.pos] = node.pos + 1


class SentenceSampler:
    """Draws (tokens, cats, heads) derivations for one language."""

    def __init__(self, spec, lexicon=None, max_depth=40):
        spec.validate()
        self.spec = spec
        self.lexicon = lexicon or build_lexicon(spec)
        self.max_depth = max_depth
        self.by_lhs = {}
        for p in spec.productions:
            self.by_lhs.setdefault(p.lhs, []).append(p)
        self.by_lhs = {
            lhs: (alts, np.cumsum([p.weight for p in alts]))
            for lhs, alts in self.by_lhs.items()
        }

    def sample(self, rng):
        root = _expand(
            self.spec, self.lexicon, self.by_lhs, "S", rng, 0, self.max_depth
        )
        tokens, cats = [], []
        _linearize(root, tokens, cats)
        heads = [0] * len(tokens)
        _assign_heads(root, heads)
        return tokens, cats, heads


def _insert_negation(tokens, cats, lexicon):
    v = cats.index("verb") if "verb" in cats else 0
    neg = lexicon.words["neg"][0]
    return tokens[:v] + [neg] + tokens[v:], cats[:v] + ["neg"] + cats[v:]


def _reduce_modifiers(tokens, cats):
    kept = [(t, c) for t, c in zip(tokens, cats) if c not in ("adj", "adv")]
    return [t for t, _ in kept], [c for _, c in kept]


def _content_words(tokens, cats):
    return {t for t, c in zip(tokens, cats) if c in CONTENT_CATEGORIES}


def similarity_label(tokens_a, cats_a, tokens_b, cats_b):
    """5 x Jaccard overlap of content-word types, rounded to 2 decimals."""
    a = _content_words(tokens_a, cats_a)
    b = _content_words(tokens_b, cats_b)
    if not a and not b:
        return 0.0
    return round(5.0 * len(a & b) / len(a | b), 2)


def _corrupt_swap(tokens, rng):
    """Swap two adjacent differing words; None if no such position exists."""
    positions = [i for i in range(len(tokens) - 1) if tokens[i] != tokens[i + 1]]
    if not positions:
        return None
    p = positions[int(rng.integers(0, len(positions)))]
    out = list(tokens)
    out[p], out[p + 1] = out[p + 1], out[p]
    return out


def _split_tag(i, n, dev_fraction=0.2):
    return "dev" if i >= int(round(n * (1 - dev_fraction))) else "train"


def _template_sense(lexicon, rng, marker):
    noun = lexicon.words["noun"]
    verb = lexicon.words["verb"]
    det = lexicon.words["det"]
    target = noun[int(rng.integers(0, len(noun)))]
    toks = [
        marker,
        target,
        verb[int(rng.integers(0, len(verb)))],
        det[int(rng.integers(0, len(det)))],
        noun[int(rng.integers(0, len(noun)))],
        lexicon.words["punct"][0],
    ]
    return toks, target


def gen_synthetic_language(
    spec, n_sentences, seed, treebank_sentences=None, task_examples=None
):
    """Generate (Corpus, Treebank, {task name -> TaskDataset}).

    Pure function of its arguments: identical inputs reproduce identical
    outputs byte-for-byte once written.
    """
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    sampler = SentenceSampler(spec)
    lexicon = sampler.lexicon
    if treebank_sentences is None:
        treebank_sentences = min(400, max(40, n_sentences // 5))
    if task_examples is None:
        task_examples = min(600, max(40, n_sentences // 2))
    m = task_examples

    # -- corpus: grammar derivations with periodic neg/marker templates so
    #    every reserved word occurs during pre-training
    rng = _rng(spec, seed, "corpus")
    documents = []
    for i in range(n_sentences):
        tokens, cats, heads = sampler.sample(rng)
        if i % 6 == 5:
            if i % 12 == 5:
                tokens, cats = _insert_negation(tokens, cats, lexicon)
            else:
                marker = lexicon.words["marker"][int(rng.integers(0, 2))]
                tokens, _ = _template_sense(lexicon, rng, marker)
        documents.append(" ".join(tokens))
    corpus = Corpus(name=spec.name, documents=tuple(documents))

    # -- treebank: derivations only, with gold heads
    rng = _rng(spec, seed, "treebank")
    parsed = []
    for i in range(treebank_sentences):
        tokens, cats, heads = sampler.sample(rng)
        check_tree(heads, index=i)
        parsed.append(
            ParsedSentence(
                tuple(tokens),
                tuple(UPOS_BY_CATEGORY[c] for c in cats),
                tuple(heads),
            )
        )
    treebank = Treebank(name=spec.name, sentences=tuple(parsed))

    tasks = {}

    # -- grammar (acceptability): original vs corrupted, exactly 50/50
    rng = _rng(spec, seed, "grammar")
    ds = TaskDataset(
        name=f"{spec.name}-grammar",
        kind="single-classification",
        label_space=["acceptable", "unacceptable"],
    )
    n_pairs = m // 2
    for i in range(n_pairs):
        corrupted = None
        while corrupted is None:
            tokens, cats, heads = sampler.sample(rng)
            corrupted = _corrupt_swap(tokens, rng)
        split = _split_tag(i, n_pairs)
        ds.examples.append(Example(" ".join(tokens), None, "acceptable", split=split))
        ds.examples.append(
            Example(" ".join(corrupted), None, "unacceptable", split=split)
        )
    tasks["grammar"] = ds

    # -- similarity (pair regression on content-word overlap)
    rng = _rng(spec, seed, "similarity")
    ds = TaskDataset(
        name=f"{spec.name}-similarity",
        kind="pair-regression",
        label_space=[0.0, 5.0],
    )
    nouns = lexicon.words["noun"]
    for i in range(m):
        tokens_a, cats_a, _ = sampler.sample(rng)
        mode = i % 3
        if mode == 0:
            tokens_b, cats_b = _reduce_modifiers(tokens_a, cats_a)
        elif mode == 1:
            tokens_b, cats_b = list(tokens_a), list(cats_a)
            noun_pos = [j for j, c in enumerate(cats_b) if c == "noun"]
            if noun_pos:
                j = noun_pos[int(rng.integers(0, len(noun_pos)))]
                tokens_b[j] = nouns[int(rng.integers(0, len(nouns)))]
        else:
            tokens_b, cats_b, _ = sampler.sample(rng)
        label = similarity_label(tokens_a, cats_a, tokens_b, cats_b)
        ds.examples.append(
            Example(" ".join(tokens_a), " ".join(tokens_b), label, split=_split_tag(i, m))
        )
    tasks["similarity"] = ds

    # -- inference (3-way pair classification); extra mismatched dev split
    rng = _rng(spec, seed, "inference")
    ds = TaskDataset(
        name=f"{spec.name}-inference",
        kind="pair-classification",
        label_space=["entail", "neutral", "contradict"],
    )

    def inference_example(i, n_total, style_shift, split_override=None):
        tokens_a, cats_a, heads_a = sampler.sample(rng)
        if style_shift:
            # length-shifted domain: an extra adjective before each noun
            adj = lexicon.words["adj"]
            shifted_t, shifted_c = [], []
            for t, c in zip(tokens_a, cats_a):
                if c == "noun":
                    shifted_t.append(adj[int(rng.integers(0, len(adj)))])
                    shifted_c.append("adj")
                shifted_t.append(t)
                shifted_c.append(c)
            tokens_a, cats_a = shifted_t, shifted_c
        mode = i % 3
        if mode == 0:
            tokens_b, _ = _reduce_modifiers(tokens_a, cats_a)
            label = "entail"
        elif mode == 1:
            tokens_b, _, _ = sampler.sample(rng)
            label = "neutral"
        else:
            tokens_b, _ = _insert_negation(tokens_a, cats_a, lexicon)
            label = "contradict"
        split = split_override or _split_tag(i, n_total)
        return Example(" ".join(tokens_a), " ".join(tokens_b), label, split=split)

    for i in range(m):
        ds.examples.append(inference_example(i, m, style_shift=False))
    for i in range(m // 5):
        ds.examples.append(
            inference_example(i, m, style_shift=True, split_override="dev_mm")
        )
    tasks["inference"] = ds

    # -- parity (minimal pronoun pairs; label independent of the pronoun).
    # The label space matches the inference task so an inference-trained
    # head can be probed on these pairs directly.
    rng = _rng(spec, seed, "parity")
    ds = TaskDataset(
        name=f"{spec.name}-parity",
        kind="pair-classification",
        label_space=["entail", "neutral", "contradict"],
    )
    pron = lexicon.words["pron"]
    verb = lexicon.words["verb"]
    det = lexicon.words["det"]
    noun = lexicon.words["noun"]
    punct = lexicon.words["punct"][0]
    n_pairs = m // 2
    for j in range(n_pairs):
        v = verb[int(rng.integers(0, len(verb)))]
        d = det[int(rng.integers(0, len(det)))]
        nn = noun[int(rng.integers(0, len(noun)))]
        hypothesis = [d, nn, v, punct]
        entail = j % 2 == 0
        if not entail:
            hypothesis = [d, nn, lexicon.words["neg"][0], v, punct]
        label = "entail" if entail else "contradict"
        split = _split_tag(j, n_pairs)
        for variant, p in enumerate(pron):
            premise = [p, v, d, nn, punct]
            ds.examples.append(
                Example(
                    " ".join(premise),
                    " ".join(hypothesis),
                    label,
                    pair_id=j,
                    variant_tag=f"p{variant}",
                    split=split,
                )
            )
    tasks["parity"] = ds

    # -- sense (WiC-analog): same/different cued by a sentence-initial marker
    rng = _rng(spec, seed, "sense")
    ds = TaskDataset(
        name=f"{spec.name}-sense",
        kind="pair-classification",
        label_space=["same", "different"],
    )
    markers = lexicon.words["marker"]
    for i in range(m):
        same = i % 2 == 0
        first = int(rng.integers(0, 2))
        second = first if same else 1 - first
        toks_a, target = _template_sense(lexicon, rng, markers[first])
        toks_b, _ = _template_sense(lexicon, rng, markers[second])
        toks_b[1] = target  # same target word in both contexts
        ds.examples.append(
            Example(
                " ".join(toks_a),
                " ".join(toks_b),
                "same" if same else "different",
                split=_split_tag(i, m),
            )
        )
    tasks["sense"] = ds

    return corpus, treebank, tasks
