#!/usr/bin/env python3
"""Golden table for the twisted free rank-one tower at p = 3.

Independent oracle for the e_{n,m} grid of the semidirect tower whose base
is the free rank-one module and whose extra generator acts by the unit
(1 + p) composed with the conjugation substitution tau -> tau^{1+p}.

The computation deliberately shares nothing with the C++ engine: it works
on the group basis {tau^k : 0 <= k < p^m} instead of the monomial basis,
builds gamma^{p^n} - 1 as an exact integer matrix, and reads e and rank off
an integer Smith normal form computed with unbounded Python integers.

Usage: python3 scripts/generate_golden.py [--p 3] [--n-max 3] [--m-max 3]
Writes CSV (n,m,e,rank) to stdout or --out.
"""

import argparse
import csv
import sys


def smith_diagonal(a):
    """Diagonal of the Smith normal form of an integer matrix (list of rows)."""
    a = [row[:] for row in a]
    rows = len(a)
    cols = len(a[0]) if rows else 0
    diag = []
    top = 0
    while top < min(rows, cols):
        # find the smallest nonzero entry to pivot on
        pivot = None
        for i in range(top, rows):
            for j in range(top, cols):
                if a[i][j] != 0 and (pivot is None or abs(a[i][j]) < abs(a[pivot[0]][pivot[1]])):
                    pivot = (i, j)
        if pivot is None:
            break
        i0, j0 = pivot
        a[top], a[i0] = a[i0], a[top]
        for row in a:
            row[top], row[j0] = row[j0], row[top]
        # clear the row and column; restart if a remainder shrinks the pivot
        while True:
            p = a[top][top]
            dirty = False
            for i in range(top + 1, rows):
                q = a[i][top] // p
                if q:
                    for j in range(top, cols):
                        a[i][j] -= q * a[top][j]
                if a[i][top] != 0:
                    a[top], a[i] = a[i], a[top]
                    dirty = True
                    break
            if dirty:
                continue
            for j in range(top + 1, cols):
                q = a[top][j] // p
                if q:
                    for i in range(top, rows):
                        a[i][j] -= q * a[i][top]
                if a[top][j] != 0:
                    for i in range(top, rows):
                        a[i][top], a[i][j] = a[i][j], a[i][top]
                    dirty = True
                    break
            if not dirty:
                break
        diag.append(abs(a[top][top]))
        top += 1
    while len(diag) < min(rows, cols):
        diag.append(0)
    return diag


def tower_cell(p, n, m):
    """(e, rank) of coker(gamma^{p^n} - 1) on Zp[Z/p^m] for gamma = (1+p) * subst."""
    size = p ** m
    scalar = (1 + p) ** (p ** n)  # exact integer, the unit part of gamma^{p^n}
    mult = scalar % size if size > 1 else 0
    mat = [[0] * size for _ in range(size)]
    for k in range(size):
        mat[(mult * k) % size][k] += scalar
        mat[k][k] -= 1
    diag = smith_diagonal(mat)
    e = 0
    rank = 0
    for d in diag:
        if d == 0:
            rank += 1
            continue
        while d % p == 0:
            e += 1
            d //= p
    return e, rank


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--n-max", type=int, default=3)
    ap.add_argument("--m-max", type=int, default=3)
    ap.add_argument("--out", type=str, default=None)
    args = ap.parse_args()

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["n", "m", "e", "rank"])
    for n in range(args.n_max + 1):
        for m in range(args.m_max + 1):
            e, rank = tower_cell(args.p, n, m)
            w.writerow([n, m, e, rank])
    if args.out:
        out.close()


if __name__ == "__main__":
    main()
