"""Naive reference computations, deliberately independent of the package internals.

Plain Python complex arithmetic over explicit assignment tuples; slow but easy
to audit.  Only used on grids small enough to enumerate.
"""

import cmath
import itertools
import math


def grid_edges(rows, cols):
    out = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                out.append((i, i + 1))
            if r + 1 < rows:
                out.append((i, i + cols))
    return out


def f_value(table, rows, cols, x):
    v = 1 + 0j
    for k, l in grid_edges(rows, cols):
        v *= table[x[k]][x[l]]
    return v


def quarter(v, tol=1e-9):
    """Quarter-turn index of a nonzero value on the axes, else None."""
    if abs(v) == 0:
        return None
    a = cmath.phase(v) / (math.pi / 2)
    k = round(a)
    if abs(a - k) > tol:
        return None
    return k % 4


def enumerate_bins(table, rows, cols):
    """``{turn: (sum, count)}`` plus ``zero_count`` by listing all assignments."""
    n = rows * cols
    sums = {k: 0j for k in range(4)}
    counts = {k: 0 for k in range(4)}
    zero = 0
    for x in itertools.product((0, 1), repeat=n):
        v = f_value(table, rows, cols, x)
        k = quarter(v)
        if abs(v) == 0:
            zero += 1
        else:
            sums[k] += v
            counts[k] += 1
    return sums, counts, zero


def all_values(table, rows, cols):
    n = rows * cols
    return [(x, f_value(table, rows, cols, x)) for x in itertools.product((0, 1), repeat=n)]


def dual_by_wires(nu, rows, cols):
    """``Z_d`` by summing over every wire assignment, keeping even parity at each node."""
    edges = grid_edges(rows, cols)
    n = rows * cols
    total = 0j
    for w in itertools.product((0, 1), repeat=2 * len(edges)):
        parity = [0] * n
        v = 1 + 0j
        for e, (k, l) in enumerate(edges):
            a, b = w[2 * e], w[2 * e + 1]
            parity[k] ^= a
            parity[l] ^= b
            v *= nu[a][b]
        if not any(parity):
            total += v
    return total


NEG13 = [[1.3, -1.0], [-1.0, 1.0]]
CPLX15I = [[1.5, 1.0], [1.0, 1j]]


def pm_table(a):
    return [[a, -a], [-a, a]]
