# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled twin of pykernels.py. Same inputs, same outputs, faster loops."""

from cpython.list cimport PyList_GET_ITEM, PyList_GET_SIZE


def count_pairs(list seqs, list counts):
    cdef dict pair_counts = {}
    cdef dict symbol_counts = {}
    cdef list seq
    cdef Py_ssize_t w, j, n
    cdef long c, prev, sym
    cdef tuple key
    for w in range(PyList_GET_SIZE(seqs)):
        seq = <list>PyList_GET_ITEM(seqs, w)
        c = counts[w]
        n = PyList_GET_SIZE(seq)
        prev = -1
        for j in range(n):
            sym = seq[j]
            symbol_counts[sym] = symbol_counts.get(sym, 0) + c
            if prev >= 0:
                key = (prev, sym)
                pair_counts[key] = pair_counts.get(key, 0) + c
            prev = sym
    return pair_counts, symbol_counts


def merge_and_delta(list seq, long a, long b, long new_id):
    cdef Py_ssize_t n = PyList_GET_SIZE(seq)
    cdef list out = []
    cdef long n_merged = 0
    cdef Py_ssize_t i = 0
    cdef long cur
    while i < n:
        cur = seq[i]
        if cur == a and i + 1 < n and <long>seq[i + 1] == b:
            out.append(new_id)
            n_merged += 1
            i += 2
        else:
            out.append(cur)
            i += 1
    if n_merged == 0:
        return None
    cdef dict delta = {}
    cdef tuple key
    cdef Py_ssize_t j
    for j in range(n - 1):
        key = (seq[j], seq[j + 1])
        delta[key] = delta.get(key, 0) - 1
    n = PyList_GET_SIZE(out)
    for j in range(n - 1):
        key = (out[j], out[j + 1])
        delta[key] = delta.get(key, 0) + 1
    return out, n_merged, delta


def greedy_segment(unicode word, dict start_table, dict cont_table, long max_piece_chars):
    cdef Py_ssize_t n = len(word)
    cdef list ids = []
    cdef Py_ssize_t i = 0, j, end
    cdef long hit
    cdef dict table
    cdef object got
    while i < n:
        table = start_table if i == 0 else cont_table
        end = i + max_piece_chars
        if end > n:
            end = n
        j = end
        hit = -1
        while j > i:
            got = table.get(word[i:j])
            if got is not None:
                hit = got
                break
            j -= 1
        if hit < 0:
            return None
        ids.append(hit)
        i = j
    return ids
