"""WordPiece training, frequency-ranked vocabularies, encode/decode.

Vocabulary ranks are load-bearing: rank 0-4 are the five specials, and
every other token is sorted by strictly non-increasing greedy-tokenization
frequency (ties broken lexicographically). The vocabulary-swap transfer
relies on this ordering being exact.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from . import _kernels

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
CONTINUATION_PREFIX = "##"
MAX_WORD_CHARS = 100


def _is_punct(ch):
    return not ch.isalnum() and not ch.isspace()


def pre_tokenize(text, lowercase=False):
    """NFC-normalize, split on whitespace, split each punctuation char off."""
    text = unicodedata.normalize("NFC", text)
    if lowercase:
        text = text.lower()
    words = []
    for chunk in text.split():
        buf = []
        for ch in chunk:
            if _is_punct(ch):
                if buf:
                    words.append("".join(buf))
                    buf = []
                words.append(ch)
            else:
                buf.append(ch)
        if buf:
            words.append("".join(buf))
    return words


class Vocabulary:
    """Ranked token table; rank = index; first five ranks are the specials."""

    def __init__(self, tokens, frequencies=None, lowercase=False, name=""):
        tokens = tuple(tokens)
        if tokens[:5] != SPECIALS:
            raise ValueError(f"ranks 0-4 must be exactly {SPECIALS}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        if frequencies is not None:
            frequencies = tuple(frequencies)
            if len(frequencies) != len(tokens):
                raise ValueError("frequencies length mismatch")
            for i in range(6, len(tokens)):
                fi, fj = frequencies[i - 1], frequencies[i]
                if fi < fj or (fi == fj and tokens[i - 1] > tokens[i]):
                    raise ValueError(
                        f"ordering invariant violated at rank {i}: "
                        f"{tokens[i - 1]!r}({fi}) before {tokens[i]!r}({fj})"
                    )
        self.tokens = tokens
        self.frequencies = frequencies
        self.lowercase = lowercase
        self.name = name
        self._id = {t: i for i, t in enumerate(tokens)}
        self._start = {}
        self._cont = {}
        for i, t in enumerate(tokens):
            if i < 5:
                continue
            if t.startswith(CONTINUATION_PREFIX):
                self._cont[t[2:]] = i
            else:
                self._start[t] = i

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def token_id(self, token):
        return self._id.get(token, UNK_ID)

    def segment_word(self, word):
        """Greedy longest-match-first subword ids for one word (UNK on failure)."""
        if len(word) > MAX_WORD_CHARS:
            return [UNK_ID]
        ids = _kernels.greedy_segment(word, self._start, self._cont, MAX_WORD_CHARS)
        return [UNK_ID] if ids is None else ids


@dataclass(frozen=True)
class Encoding:
    ids: tuple[int, ...]
    type_ids: tuple[int, ...]
    word_spans: tuple[tuple[int, int], ...]  # [start, end) per surviving word


def _merged_string(sym_a, sym_b):
    return sym_a + (sym_b[2:] if sym_b.startswith(CONTINUATION_PREFIX) else sym_b)


def train_wordpiece_detailed(corpus, vocab_size, lowercase=False):
    """Train and also return the merge sequence (pairs of token strings)."""
    word_counts = Counter()
    for sentence in corpus.documents:
        word_counts.update(pre_tokenize(sentence, lowercase=lowercase))
    if not word_counts:
        raise ValueError("empty corpus: nothing to train on")

    word_items = sorted(word_counts.items())
    symbols = []  # id -> string
    symbol_id = {}

    def intern(s):
        got = symbol_id.get(s)
        if got is not None:
            return got
        symbol_id[s] = len(symbols)
        symbols.append(s)
        return len(symbols) - 1

    seqs = []
    counts = []
    for word, c in word_items:
        seq = [intern(word[0])]
        seq.extend(intern(CONTINUATION_PREFIX + ch) for ch in word[1:])
        seqs.append(seq)
        counts.append(c)

    n_alphabet = len(symbols)
    if vocab_size < 5 + n_alphabet:
        raise ValueError(
            f"vocab_size {vocab_size} < 5 specials + {n_alphabet} alphabet forms"
        )

    pair_counts, symbol_counts = _kernels.count_pairs(seqs, counts)
    pair_words = {}
    for w, seq in enumerate(seqs):
        for j in range(len(seq) - 1):
            pair_words.setdefault((seq[j], seq[j + 1]), set()).add(w)

    vocab_tokens = list(symbols)  # alphabet forms; merges appended below
    merges = []

    while len(vocab_tokens) + 5 < vocab_size:
        # exact best-score selection: score = pc/(sa*sb) compared by
        # integer cross-multiplication, ties to the lexicographically
        # smallest (token_a, token_b)
        best = None
        for (a, b), pc in pair_counts.items():
            if pc <= 0:
                continue
            sa_sb = symbol_counts[a] * symbol_counts[b]
            key = (symbols[a], symbols[b])
            if best is None:
                best = (a, b, pc, sa_sb, key)
                continue
            lhs = pc * best[3]
            rhs = best[2] * sa_sb
            if lhs > rhs or (lhs == rhs and key < best[4]):
                best = (a, b, pc, sa_sb, key)
        if best is None:
            break
        a, b, _, _, key = best
        merged = _merged_string(symbols[a], symbols[b])
        existed = merged in symbol_id
        new_id = intern(merged)
        if not existed:
            vocab_tokens.append(merged)
        merges.append(key)

        affected = sorted(pair_words.get((a, b), ()))
        total = 0
        for w in affected:
            res = _kernels.merge_and_delta(seqs[w], a, b, new_id)
            if res is None:
                continue
            new_seq, n_merged, delta = res
            seqs[w] = new_seq
            c = counts[w]
            total += n_merged * c
            for pair, d in delta.items():
                if d == 0:
                    continue
                pair_counts[pair] = pair_counts.get(pair, 0) + d * c
                if d > 0:
                    pair_words.setdefault(pair, set()).add(w)
        symbol_counts[a] = symbol_counts.get(a, 0) - total
        symbol_counts[b] = symbol_counts.get(b, 0) - total
        symbol_counts[new_id] = symbol_counts.get(new_id, 0) + total
        pair_counts.pop((a, b), None)
        pair_words.pop((a, b), None)

    # greedy re-tokenization of the corpus fixes the final frequencies
    interim = Vocabulary(
        SPECIALS + tuple(vocab_tokens), lowercase=lowercase, name=corpus.name
    )
    freq = Counter()
    for word, c in word_items:
        for tid in interim.segment_word(word):
            freq[tid] += c

    ranked = sorted(
        range(5, len(interim.tokens)),
        key=lambda tid: (-freq.get(tid, 0), interim.tokens[tid]),
    )
    tokens = SPECIALS + tuple(interim.tokens[tid] for tid in ranked)
    frequencies = (0,) * 5 + tuple(freq.get(tid, 0) for tid in ranked)
    vocab = Vocabulary(tokens, frequencies, lowercase=lowercase, name=corpus.name)
    return vocab, merges


def train_wordpiece(corpus, vocab_size, lowercase=False):
    """Train a WordPiece vocabulary of at most vocab_size tokens."""
    vocab, _ = train_wordpiece_detailed(corpus, vocab_size, lowercase=lowercase)
    return vocab


def truncate_vocabulary(vocab, n):
    """Keep ranks [0, n); the specials survive by construction."""
    if n < 5:
        raise ValueError("cannot truncate below the 5 special tokens")
    if n > len(vocab):
        raise ValueError(f"n={n} exceeds vocabulary size {len(vocab)}")
    freqs = vocab.frequencies[:n] if vocab.frequencies is not None else None
    return Vocabulary(
        vocab.tokens[:n], freqs, lowercase=vocab.lowercase, name=vocab.name
    )


def _segment_words(vocab, text):
    words = pre_tokenize(text, lowercase=vocab.lowercase)
    return [vocab.segment_word(w) for w in words]


def _truncate_pair(pieces_a, pieces_b, budget):
    """Trim subword ids from the longer segment until the pair fits."""
    len_a = sum(len(p) for p in pieces_a)
    len_b = sum(len(p) for p in pieces_b)
    while len_a + len_b > budget:
        if len_a > len_b:
            _pop_last(pieces_a)
            len_a -= 1
        else:
            _pop_last(pieces_b)
            len_b -= 1


def _pop_last(pieces):
    while pieces and not pieces[-1]:
        pieces.pop()
    if pieces:
        pieces[-1].pop()
        if not pieces[-1]:
            pieces.pop()


def _truncate_single(pieces, budget):
    length = sum(len(p) for p in pieces)
    while length > budget:
        _pop_last(pieces)
        length -= 1


def _assemble(pieces_a, pieces_b):
    ids = [CLS_ID]
    type_ids = [0]
    spans = []
    for pieces, segment in ((pieces_a, 0), (pieces_b, 1)):
        if pieces is None:
            continue
        for p in pieces:
            if p:
                spans.append((len(ids), len(ids) + len(p)))
                ids.extend(p)
                type_ids.extend([segment] * len(p))
        ids.append(SEP_ID)
        type_ids.append(segment)
    return Encoding(tuple(ids), tuple(type_ids), tuple(spans))


def encode(vocab, text_a, text_b=None, max_len=128):
    """BERT-style packing: [CLS] a [SEP] (b [SEP]), truncated to max_len."""
    if max_len < 8:
        raise ValueError("max_len must be >= 8")
    pieces_a = _segment_words(vocab, text_a)
    if text_b is None:
        _truncate_single(pieces_a, max_len - 2)
        return _assemble(pieces_a, None)
    pieces_b = _segment_words(vocab, text_b)
    _truncate_pair(pieces_a, pieces_b, max_len - 3)
    return _assemble(pieces_a, pieces_b)


def encode_pretokenized(vocab, words, max_len=128):
    """Encode an already-tokenized sentence, one subword group per word.

    Returns None when the encoding would not fit max_len (callers that
    need exact word alignment, like the probe, skip such sentences).
    """
    pieces = [vocab.segment_word(w) for w in words]
    if sum(len(p) for p in pieces) > max_len - 2:
        return None
    return _assemble(pieces, None)


def decode(vocab, ids):
    """Inverse of encode up to whitespace normalization (UNK-free inputs)."""
    words = []
    for i in ids:
        if not 0 <= i < len(vocab):
            raise ValueError(f"token id {i} out of range")
        if i < 5:
            continue
        tok = vocab.tokens[i]
        if tok.startswith(CONTINUATION_PREFIX) and words:
            words[-1] += tok[2:]
        else:
            words.append(tok)
    return " ".join(words)


def save_vocab(vocab, path):
    Path(path).write_text(
        "".join(t + "\n" for t in vocab.tokens), encoding="utf-8"
    )


def save_tokenizer_config(vocab, path):
    Path(path).write_text(
        json.dumps(
            {
                "lowercase": vocab.lowercase,
                "max_word_chars": MAX_WORD_CHARS,
                "continuation_prefix": CONTINUATION_PREFIX,
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


def load_vocab(path, config_path=None, name=None):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    lowercase = False
    if config_path is not None and Path(config_path).exists():
        lowercase = json.loads(Path(config_path).read_text(encoding="utf-8"))[
            "lowercase"
        ]
    return Vocabulary(
        [l for l in lines if l], lowercase=lowercase, name=name or Path(path).stem
    )
