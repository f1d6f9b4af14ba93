"""Backend parity: the compiled kernels must match the pure-Python ones."""

import numpy as np
import pytest

from xfer_forge import _kernels
from xfer_forge._kernels import pykernels


def random_seqs(rng, n=40):
    seqs = [list(rng.integers(0, 12, size=rng.integers(1, 10))) for _ in range(n)]
    counts = [int(rng.integers(1, 50)) for _ in range(n)]
    return seqs, counts


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")


def test_count_pairs_parity():
    rng = np.random.default_rng(0)
    for _ in range(10):
        seqs, counts = random_seqs(rng)
        seqs = [[int(x) for x in s] for s in seqs]
        assert _kernels.count_pairs(seqs, counts) == pykernels.count_pairs(seqs, counts)


def test_count_pairs_counts_overlaps():
    pairs, syms = pykernels.count_pairs([[1, 1, 1]], [2])
    assert pairs == {(1, 1): 4}
    assert syms == {1: 6}


def test_merge_and_delta_parity():
    rng = np.random.default_rng(1)
    for _ in range(200):
        seq = [int(x) for x in rng.integers(0, 4, size=rng.integers(2, 12))]
        a, b = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        got = _kernels.merge_and_delta(list(seq), a, b, 99)
        want = pykernels.merge_and_delta(list(seq), a, b, 99)
        assert got == want


def test_merge_left_to_right_non_overlapping():
    out, n, _ = pykernels.merge_and_delta([7, 7, 7], 7, 7, 9)
    assert out == [9, 7]
    assert n == 1
    assert _kernels.merge_and_delta([7, 7, 7], 7, 7, 9)[0] == [9, 7]


def test_merge_absent_pair_returns_none():
    assert pykernels.merge_and_delta([1, 2, 3], 5, 6, 9) is None
    assert _kernels.merge_and_delta([1, 2, 3], 5, 6, 9) is None


def test_greedy_segment_parity():
    start = {"ab": 10, "a": 11, "b": 12}
    cont = {"c": 13, "bc": 14, "b": 15}
    words = ["abc", "abcbc", "a", "ab", "x", "abx", "", "aXbc"]
    for w in words:
        got = _kernels.greedy_segment(w, start, cont, 100)
        want = pykernels.greedy_segment(w, start, cont, 100)
        assert got == want, w


def test_greedy_segment_longest_first():
    start = {"a": 0, "ab": 1}
    cont = {"c": 2, "bc": 3, "b": 4}
    # "abc": takes "ab" (longest start match), then "##c"
    assert pykernels.greedy_segment("abc", start, cont, 100) == [1, 2]
    # "abbc": "ab" then "##bc" beats "##b" "##c"
    assert pykernels.greedy_segment("abbc", start, cont, 100) == [1, 3]


def test_greedy_segment_respects_piece_budget():
    start = {"aaaa": 0, "a": 1}
    cont = {"a": 2}
    assert pykernels.greedy_segment("aaaa", start, cont, 3) == [1, 2, 2, 2]
    assert _kernels.greedy_segment("aaaa", start, cont, 3) == [1, 2, 2, 2]


@pytest.mark.skipif(_kernels.BACKEND != "cython", reason="extension not built")
def test_compiled_backend_active():
    assert _kernels.count_pairs is not pykernels.count_pairs
