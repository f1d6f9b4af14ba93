"""Corpora, treebanks, and task datasets: domain types plus file I/O.

File formats:
  * text corpus: UTF-8, one sentence per line
  * treebank: CoNLL-U (only FORM, UPOS, HEAD are consumed)
  * task data: JSON Lines records + a JSON sidecar manifest
    {"kind", "label_space", "name"}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

TASK_KINDS = (
    "single-classification",
    "pair-classification",
    "single-regression",
    "pair-regression",
)


@dataclass(frozen=True)
class Corpus:
    name: str
    documents: tuple[str, ...]

    def __len__(self):
        return len(self.documents)


@dataclass(frozen=True)
class ParsedSentence:
    tokens: tuple[str, ...]
    upos: tuple[str, ...]
    heads: tuple[int, ...]  # per-token governor index, 1-based; 0 = root

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Treebank:
    name: str
    sentences: tuple[ParsedSentence, ...]

    def __len__(self):
        return len(self.sentences)


@dataclass(frozen=True)
class Example:
    text_a: str
    text_b: str | None = None
    label: object = None
    pair_id: int | None = None
    variant_tag: str | None = None
    split: str = "train"


@dataclass
class TaskDataset:
    name: str
    kind: str
    label_space: object  # class-name list, or [lo, hi] numeric range
    examples: list[Example] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind: {self.kind!r}")

    @property
    def is_pair(self):
        return self.kind.startswith("pair-")

    @property
    def is_regression(self):
        return self.kind.endswith("-regression")

    def split(self, name):
        return [ex for ex in self.examples if ex.split == name]

    def label_ok(self, label):
        if self.is_regression:
            lo, hi = self.label_space
            return isinstance(label, (int, float)) and lo <= float(label) <= hi
        return label in self.label_space


def check_tree(heads, index=None):
    """Validate that heads encode a single-rooted acyclic tree.

    heads are 1-based with 0 for the root. Raises ValueError naming the
    sentence index on violation.
    """
    where = f" (sentence {index})" if index is not None else ""
    n = len(heads)
    roots = [i for i, h in enumerate(heads) if h == 0]
    if len(roots) != 1:
        raise ValueError(f"tree must have exactly one root, got {len(roots)}{where}")
    for i, h in enumerate(heads):
        if not 0 <= h <= n:
            raise ValueError(f"head index {h} out of range{where}")
        steps = 0
        node = i
        while heads[node] != 0:
            node = heads[node] - 1
            steps += 1
            if steps > n:
                raise ValueError(f"cyclic head structure{where}")


def read_text_corpus(path, name=None):
    """Read a one-sentence-per-line UTF-8 file; blank lines are dropped."""
    path = Path(path)
    raw = path.read_bytes()
    sentences = []
    for lineno, line in enumerate(raw.split(b"\n"), start=1):
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValueError(f"{path}: invalid UTF-8 on line {lineno}: {exc}") from None
        text = text.strip()
        if text:
            sentences.append(text)
    return Corpus(name=name or path.stem, documents=tuple(sentences))


def write_text_corpus(corpus, path):
    Path(path).write_text("".join(s + "\n" for s in corpus.documents), encoding="utf-8")


def parse_conllu(path, name=None):
    """Parse a CoNLL-U file into a Treebank.

    Multiword-token ranges ("3-4") and empty nodes ("5.1") are skipped;
    comment lines start with '#'. Head structure is re-checked per sentence.
    """
    path = Path(path)
    sentences = []
    tokens, upos, heads = [], [], []

    def flush():
        if tokens:
            check_tree(heads, index=len(sentences))
            sentences.append(
                ParsedSentence(tuple(tokens), tuple(upos), tuple(heads))
            )
            tokens.clear()
            upos.clear()
            heads.clear()

    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 8:
                raise ValueError(f"{path}:{lineno}: expected >= 8 tab-separated columns")
            tok_id = cols[0]
            if "-" in tok_id or "." in tok_id:
                continue  # range line or empty node
            try:
                head = int(cols[6])
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: non-integer HEAD {cols[6]!r}"
                ) from None
            tokens.append(cols[1])
            upos.append(cols[3])
            heads.append(head)
    flush()
    return Treebank(name=name or path.stem, sentences=tuple(sentences))


def write_conllu(treebank, path):
    """Write a Treebank using only the columns this package consumes."""
    lines = []
    for sent in treebank.sentences:
        for i, (form, tag, head) in enumerate(
            zip(sent.tokens, sent.upos, sent.heads), start=1
        ):
            lines.append(
                "\t".join([str(i), form, "_", tag, "_", "_", str(head), "_", "_", "_"])
            )
        lines.append("")
    Path(path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")


def _manifest_path(jsonl_path):
    p = Path(jsonl_path)
    stem = p.name[:-6] if p.name.endswith(".jsonl") else p.name
    return p.with_name(stem + ".manifest.json")


def write_task_dataset(ds, path):
    """Write JSON-Lines records plus the sidecar manifest."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ex in ds.examples:
            fh.write(
                json.dumps(
                    {
                        "text_a": ex.text_a,
                        "text_b": ex.text_b,
                        "label": ex.label,
                        "pair_id": ex.pair_id,
                        "variant_tag": ex.variant_tag,
                        "split": ex.split,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
    manifest = {"name": ds.name, "kind": ds.kind, "label_space": ds.label_space}
    _manifest_path(path).write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_task_dataset(path):
    """Load and validate a JSON-Lines task dataset."""
    path = Path(path)
    manifest = json.loads(_manifest_path(path).read_text(encoding="utf-8"))
    ds = TaskDataset(
        name=manifest["name"], kind=manifest["kind"], label_space=manifest["label_space"]
    )
    with path.open(encoding="utf-8") as fh:
        for idx, line in enumerate(fh):
            if not line.strip():
                continue
            rec = json.loads(line)
            label = rec.get("label")
            if not ds.label_ok(label):
                raise ValueError(f"{path}: record {idx}: label {label!r} outside label_space")
            text_b = rec.get("text_b")
            if ds.is_pair and text_b is None:
                raise ValueError(f"{path}: record {idx}: pair task requires text_b")
            ds.examples.append(
                Example(
                    text_a=rec["text_a"],
                    text_b=text_b,
                    label=label,
                    pair_id=rec.get("pair_id"),
                    variant_tag=rec.get("variant_tag"),
                    split=rec.get("split", "train"),
                )
            )
    return ds
