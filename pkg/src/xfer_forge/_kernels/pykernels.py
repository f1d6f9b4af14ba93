"""Pure-Python kernels for the tokenizer hot loops.

Semantics here are the reference: the compiled twin in ``_wordpiece.pyx``
must produce identical outputs for identical inputs (tested in
tests/test_kernels.py). Symbol sequences are plain lists of ints, one
list per distinct word type.
"""


def count_pairs(seqs, counts):
    """Count adjacent symbol pairs and symbol occurrences, weighted by word count.

    Overlapping adjacencies all count: [a, a, a] contributes (a, a) twice.
    Returns (pair_counts, symbol_counts) as dicts.
    """
    pair_counts = {}
    symbol_counts = {}
    for seq, c in zip(seqs, counts):
        prev = -1
        for sym in seq:
            symbol_counts[sym] = symbol_counts.get(sym, 0) + c
            if prev >= 0:
                key = (prev, sym)
                pair_counts[key] = pair_counts.get(key, 0) + c
            prev = sym
    return pair_counts, symbol_counts


def merge_and_delta(seq, a, b, new_id):
    """Merge left-to-right non-overlapping occurrences of (a, b) into new_id.

    Returns (new_seq, n_merged, delta) where delta maps pair -> signed
    per-occurrence adjacency change between the old and new sequence.
    Returns None when the pair does not occur.
    """
    n = len(seq)
    out = []
    n_merged = 0
    i = 0
    while i < n:
        if seq[i] == a and i + 1 < n and seq[i + 1] == b:
            out.append(new_id)
            n_merged += 1
            i += 2
        else:
            out.append(seq[i])
            i += 1
    if n_merged == 0:
        return None
    delta = {}
    for j in range(len(seq) - 1):
        key = (seq[j], seq[j + 1])
        delta[key] = delta.get(key, 0) - 1
    for j in range(len(out) - 1):
        key = (out[j], out[j + 1])
        delta[key] = delta.get(key, 0) + 1
    return out, n_merged, delta


def greedy_segment(word, start_table, cont_table, max_piece_chars):
    """Greedy longest-match-first WordPiece segmentation of one word.

    start_table maps word-initial piece text to id; cont_table maps
    continuation piece text (without the "##" marker) to id. Returns a
    list of ids, or None when some position has no matching piece.
    """
    n = len(word)
    ids = []
    i = 0
    while i < n:
        table = start_table if i == 0 else cont_table
        end = min(n, i + max_piece_chars)
        j = end
        hit = -1
        while j > i:
            piece = word[i:j]
            got = table.get(piece)
            if got is not None:
                hit = got
                break
            j -= 1
        if hit < 0:
            return None
        ids.append(hit)
        i = j
    return ids
