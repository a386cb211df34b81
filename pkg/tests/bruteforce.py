"""Exhaustive close/keep search used as an independent oracle check.

The toy model has no timing: each bank holds an open row or nothing, an
access hits the open row, misses a different open row or is an empty, and
then the decision for that access keeps its row open or closes it.
"""

import numpy as np
from numba import njit

MAX_ROWS = 4


@njit(cache=True)
def brute_force(banks, rows, nbanks):
    """(max hits, min misses, max misses, max hits among zero-miss sequences)
    over all 2**n decision sequences of one trace."""
    n = banks.shape[0]
    best_hits = -1
    min_miss = n + 1
    max_miss = -1
    best_clean = -1
    open_row = np.empty(nbanks, dtype=np.int64)
    for mask in range(1 << n):
        open_row[:] = -1
        hits = 0
        misses = 0
        for i in range(n):
            b = banks[i]
            r = rows[i]
            if open_row[b] == r:
                hits += 1
            elif open_row[b] >= 0:
                misses += 1
            if (mask >> i) & 1:
                open_row[b] = -1
            else:
                open_row[b] = r
        best_hits = max(best_hits, hits)
        min_miss = min(min_miss, misses)
        max_miss = max(max_miss, misses)
        if misses == 0:
            best_clean = max(best_clean, hits)
    return best_hits, min_miss, max_miss, best_clean


@njit(cache=True)
def enumerate_canonical(max_len, nbanks, capacity):
    """Every canonical trace up to ``max_len`` with its exhaustive-search stats.

    Canonical: the first access goes to bank 0 and each bank numbers its rows
    in order of first use (rows are interchangeable within a bank, banks are
    interchangeable), at most ``MAX_ROWS`` rows per bank. The search walks
    the trace tree depth first; node ``d`` keeps the bank state reached by
    each of the ``2**d`` decision prefixes, so every full decision sequence
    of every trace is evaluated.

    Returns ``(codes, lengths, stats)``; ``codes`` packs (bank, row) symbols
    3 bits each, oldest access in the highest bits.
    """
    width = 1 << max_len
    op = np.full((max_len + 1, 2, width), -1, dtype=np.int8)
    hit = np.zeros((max_len + 1, width), dtype=np.int8)
    mis = np.zeros((max_len + 1, width), dtype=np.int8)
    used = np.zeros((max_len + 1, 2), dtype=np.int64)
    nxt = np.zeros(max_len + 1, dtype=np.int64)
    code = np.zeros(max_len + 1, dtype=np.int64)
    codes = np.zeros(capacity, dtype=np.int64)
    lengths = np.zeros(capacity, dtype=np.int64)
    stats = np.zeros((capacity, 4), dtype=np.int64)
    count = 0
    d = 0
    while d >= 0:
        if d == max_len:
            d -= 1
            continue
        found = False
        b = 0
        r = 0
        while nxt[d] < 2 * (MAX_ROWS + 1):
            s = nxt[d]
            nxt[d] += 1
            b = s // (MAX_ROWS + 1)
            r = s % (MAX_ROWS + 1)
            if b >= nbanks or (b == 1 and d == 0):
                continue
            if r > used[d, b] or r >= MAX_ROWS:
                continue
            found = True
            break
        if not found:
            d -= 1
            continue
        o = 1 - b
        grow = d + 1 < max_len
        best_hits = -1
        min_miss = 1 << 30
        max_miss = -1
        best_clean = -1
        for i in range(1 << d):
            h = hit[d, i]
            m = mis[d, i]
            cur = op[d, b, i]
            if cur == r:
                h += 1
            elif cur >= 0:
                m += 1
            if h > best_hits:
                best_hits = h
            if m < min_miss:
                min_miss = m
            if m > max_miss:
                max_miss = m
            if m == 0 and h > best_clean:
                best_clean = h
            if grow:
                for k in range(2):
                    j = 2 * i + k
                    op[d + 1, b, j] = r if k == 0 else -1
                    op[d + 1, o, j] = op[d, o, i]
                    hit[d + 1, j] = h
                    mis[d + 1, j] = m
        code[d + 1] = code[d] * 8 + b * MAX_ROWS + r
        codes[count] = code[d + 1]
        lengths[count] = d + 1
        stats[count, 0] = best_hits
        stats[count, 1] = min_miss
        stats[count, 2] = max_miss
        stats[count, 3] = best_clean
        count += 1
        used[d + 1, 0] = used[d, 0]
        used[d + 1, 1] = used[d, 1]
        if r + 1 > used[d + 1, b]:
            used[d + 1, b] = r + 1
        nxt[d + 1] = 0
        d += 1
    return codes[:count], lengths[:count], stats[:count]


def decode_code(code, length):
    banks, rows = [], []
    for k in range(length - 1, -1, -1):
        sym = (code >> (3 * k)) & 7
        banks.append(sym // MAX_ROWS)
        rows.append(sym % MAX_ROWS)
    return banks, rows


def canonical_count(max_len, nbanks):
    """Number of canonical traces, computed combinatorially (Stirling numbers)."""
    from math import comb

    def stirling(n, k, memo={}):
        if (n, k) in memo:
            return memo[n, k]
        if n == k:
            v = 1
        elif n == 0 or k == 0:
            v = 0
        else:
            v = k * stirling(n - 1, k) + stirling(n - 1, k - 1)
        memo[n, k] = v
        return v

    def rgs(m):
        return 1 if m == 0 else sum(stirling(m, j) for j in range(1, MAX_ROWS + 1))

    total = 0
    for k in range(1, max_len + 1):
        if nbanks == 1:
            total += rgs(k)
        else:
            # first access on bank 0
            total += sum(comb(k - 1, m - 1) * rgs(m) * rgs(k - m) for m in range(1, k + 1))
    return total
