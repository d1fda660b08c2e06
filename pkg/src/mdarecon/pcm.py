"""Sparse parity-check matrices with raptor-like rate windows.

A :class:`SparsePCM` holds the total matrix ``H_t`` in CSR form.  Its
upper-left ``base_m x base_n`` block is the highest-rate code; uncovering
``d`` further rows and columns gives the window ``H'`` of rate
``(base_n - base_m) / (base_n + d)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit


class AlistError(ValueError):
    """Malformed alist input.  ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@njit(cache=True)
def _syndrome_kernel(row_ptr, col_idx, bits):
    m = row_ptr.shape[0] - 1
    out = np.zeros(m, dtype=np.uint8)
    for i in range(m):
        acc = 0
        for e in range(row_ptr[i], row_ptr[i + 1]):
            acc ^= bits[col_idx[e]]
        out[i] = acc
    return out


def _rows_to_csr(rows: Sequence[Iterable[int]]) -> tuple[np.ndarray, np.ndarray]:
    lengths = [len(r) for r in rows]
    row_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(lengths, out=row_ptr[1:])
    if row_ptr[-1]:
        col_idx = np.concatenate([np.asarray(sorted(r), dtype=np.int64) for r in rows if len(r)])
    else:
        col_idx = np.zeros(0, dtype=np.int64)
    return row_ptr, col_idx


def extension_depth(row_ptr: np.ndarray, col_idx: np.ndarray, n_total: int, m_total: int) -> int:
    """Largest ``D`` such that the last ``D`` columns form a degree-1 extension.

    Column ``n_total - t`` must have its first nonzero in row ``m_total - t``
    for every ``t`` in ``1..D``.
    """
    first_row = np.full(n_total, m_total, dtype=np.int64)
    rows_of_edges = np.repeat(np.arange(m_total), np.diff(row_ptr))
    np.minimum.at(first_row, col_idx, rows_of_edges)
    depth = 0
    while depth < min(n_total, m_total) - 1:
        t = depth + 1
        if first_row[n_total - t] != m_total - t:
            break
        depth = t
    return depth


@dataclass(eq=False)
class SparsePCM:
    """Binary parity-check matrix stored row-major.

    Parameters
    ----------
    n_total, m_total : int
        Column and row counts of the full matrix.
    row_ptr, col_idx : ndarray of int64
        CSR structure; column indices within a row are sorted and unique.
    base_n, base_m : int
        Dimensions of the highest-rate window.
    """

    n_total: int
    m_total: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    base_n: int
    base_m: int
    raptor_flag: bool = field(init=False)
    _structures: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        self.row_ptr.flags.writeable = False
        self.col_idx.flags.writeable = False
        if self.row_ptr.shape[0] != self.m_total + 1:
            raise ValueError("row_ptr length must be m_total + 1")
        if self.col_idx.size and (self.col_idx.min() < 0 or self.col_idx.max() >= self.n_total):
            raise ValueError("column index out of range")
        for i in range(self.m_total):
            seg = self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]
            if seg.size > 1 and np.any(np.diff(seg) <= 0):
                raise ValueError(f"row {i} is not strictly increasing (duplicate or unsorted entries)")
        if not (0 < self.base_n <= self.n_total and 0 <= self.base_m <= self.m_total):
            raise ValueError("base dimensions out of range")
        if self.base_m >= self.base_n:
            raise ValueError("base_m must be smaller than base_n")
        if self.n_total - self.base_n != self.m_total - self.base_m:
            raise ValueError("extension must add equal numbers of rows and columns")
        self.raptor_flag = self.max_d <= extension_depth(
            self.row_ptr, self.col_idx, self.n_total, self.m_total)

    @classmethod
    def from_rows(cls, rows: Sequence[Iterable[int]], n_total: int,
                  base_n: int | None = None, base_m: int | None = None) -> "SparsePCM":
        """Build from a list of column-index lists (one per row)."""
        row_ptr, col_idx = _rows_to_csr([list(r) for r in rows])
        m_total = len(rows)
        if base_n is None and base_m is None:
            depth = extension_depth(row_ptr, col_idx, n_total, m_total) if m_total else 0
            base_n, base_m = n_total - depth, m_total - depth
        elif base_n is None or base_m is None:
            raise ValueError("give both base_n and base_m or neither")
        return cls(n_total, m_total, row_ptr, col_idx, base_n, base_m)

    @classmethod
    def from_dense(cls, H, base_n: int | None = None, base_m: int | None = None) -> "SparsePCM":
        H = np.asarray(H)
        rows = [np.flatnonzero(H[i]).tolist() for i in range(H.shape[0])]
        return cls.from_rows(rows, H.shape[1], base_n, base_m)

    @property
    def max_d(self) -> int:
        return self.n_total - self.base_n

    @property
    def rows(self) -> list[np.ndarray]:
        return [self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]] for i in range(self.m_total)]

    @property
    def n_edges(self) -> int:
        return int(self.row_ptr[-1])

    def to_dense(self) -> np.ndarray:
        H = np.zeros((self.m_total, self.n_total), dtype=np.uint8)
        rr = np.repeat(np.arange(self.m_total), np.diff(self.row_ptr))
        H[rr, self.col_idx] = 1
        return H

    def same_pattern(self, other: "SparsePCM") -> bool:
        return (self.n_total == other.n_total and self.m_total == other.m_total
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx))

    def digest(self) -> str:
        """Short content hash identifying the nonzero pattern and base split."""
        h = hashlib.sha256()
        h.update(np.array([self.n_total, self.m_total, self.base_n, self.base_m], dtype=np.int64).tobytes())
        h.update(self.row_ptr.tobytes())
        h.update(self.col_idx.tobytes())
        return h.hexdigest()[:16]

    def window(self, d: int) -> "PCMWindow":
        return window(self, d)

    def rate_range(self) -> tuple[float, float]:
        """(lowest, highest) rate reachable by windowing."""
        return window(self, self.max_d).rate, window(self, 0).rate

    def _structure(self, d: int) -> "_WindowStructure":
        s = self._structures.get(d)
        if s is None:
            s = _WindowStructure.build(self, d)
            self._structures[d] = s
        return s


@dataclass(frozen=True)
class _WindowStructure:
    row_ptr: np.ndarray
    col_idx: np.ndarray
    var_ptr: np.ndarray
    var_edges: np.ndarray

    @classmethod
    def build(cls, pcm: SparsePCM, d: int) -> "_WindowStructure":
        m, n = pcm.base_m + d, pcm.base_n + d
        row_ptr = pcm.row_ptr[:m + 1]
        col_idx = pcm.col_idx[:row_ptr[-1]]
        if col_idx.size and col_idx.max() >= n:
            # rows reach beyond the window; only possible for non-triangular extensions
            keep = col_idx < n
            edge_rows = np.repeat(np.arange(m), np.diff(row_ptr))
            counts = np.bincount(edge_rows[keep], minlength=m)
            row_ptr = np.zeros(m + 1, dtype=np.int64)
            np.cumsum(counts, out=row_ptr[1:])
            col_idx = col_idx[keep]
        var_edges = np.argsort(col_idx, kind="stable").astype(np.int64)
        var_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(col_idx, minlength=n), out=var_ptr[1:])
        for a in (row_ptr, col_idx, var_ptr, var_edges):
            a.flags.writeable = False
        return cls(row_ptr, col_idx, var_ptr, var_edges)


@dataclass(frozen=True)
class PCMWindow:
    """Rows ``[0, base_m + d)`` and columns ``[0, base_n + d)`` of a parent matrix."""

    parent: SparsePCM
    d: int

    @property
    def n(self) -> int:
        return self.parent.base_n + self.d

    @property
    def m(self) -> int:
        return self.parent.base_m + self.d

    @property
    def rate(self) -> float:
        return (self.parent.base_n - self.parent.base_m) / self.n

    @property
    def structure(self) -> _WindowStructure:
        return self.parent._structure(self.d)

    def deepen(self, d_extra: int) -> "PCMWindow":
        return window(self.parent, self.d + d_extra)


def window(pcm: SparsePCM, d: int) -> PCMWindow:
    """Rate-selecting view of ``pcm`` at extension depth ``d``."""
    if d < 0 or d > pcm.max_d:
        raise ValueError(f"window depth {d} outside [0, {pcm.max_d}]")
    return PCMWindow(pcm, int(d))


def syndrome(w: PCMWindow, bits) -> np.ndarray:
    """Parity-check results of ``bits`` under window ``w`` (uint8 array of length ``w.m``)."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.shape[0] != w.n:
        raise ValueError(f"frame length {bits.shape} does not match window n'={w.n}")
    s = w.structure
    return _syndrome_kernel(s.row_ptr, s.col_idx, bits)


def generate_raptor_family(seed: int, base_n: int, base_m: int, max_d: int,
                           ext_degree: int = 3, col_degree: int = 3) -> SparsePCM:
    """Synthetic raptor-like matrix: random column-regular base plus degree-1 extension.

    The base block has ``col_degree`` ones per column spread as evenly as
    possible over ``base_m`` rows.  Extension row ``base_m + j`` holds column
    ``base_n + j`` and ``ext_degree`` further columns drawn without
    replacement from ``[0, base_n + j)``.
    """
    if not (0 < base_m < base_n):
        raise ValueError("need 0 < base_m < base_n")
    if ext_degree < 1 or max_d < 0:
        raise ValueError("need ext_degree >= 1 and max_d >= 0")
    if col_degree < 1 or col_degree > base_m:
        raise ValueError("col_degree must be in [1, base_m]")
    if ext_degree > base_n:
        raise ValueError("ext_degree exceeds the number of base columns")

    for attempt in range(100):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        base_rows = _regular_base(rng, base_n, base_m, col_degree)
        if base_rows is not None:
            break
    else:
        raise RuntimeError("could not build a non-degenerate base block in 100 attempts")

    rows = base_rows
    for j in range(max_d):
        others = rng.choice(base_n + j, size=ext_degree, replace=False)
        rows.append(sorted(others.tolist()) + [base_n + j])
    return SparsePCM.from_rows(rows, base_n + max_d, base_n=base_n, base_m=base_m)


def _regular_base(rng: np.random.Generator, n: int, m: int, dv: int) -> list[list[int]] | None:
    sockets = np.resize(np.arange(m), n * dv)
    rng.shuffle(sockets)
    cols = sockets.reshape(n, dv)
    # repair repeated rows inside a column by swapping with random sockets
    for _ in range(50):
        bad = [j for j in range(n) if len(set(cols[j])) < dv]
        if not bad:
            break
        for j in bad:
            for k in range(dv):
                if np.count_nonzero(cols[j] == cols[j, k]) > 1:
                    jj, kk = rng.integers(n), rng.integers(dv)
                    cols[j, k], cols[jj, kk] = cols[jj, kk], cols[j, k]
    else:
        return None
    rows: list[list[int]] = [[] for _ in range(m)]
    for j in range(n):
        for i in cols[j]:
            rows[i].append(j)
    if any(len(r) == 0 for r in rows):
        return None
    return [sorted(r) for r in rows]


def load_alist(text: str, base_n: int | None = None, base_m: int | None = None) -> SparsePCM:
    """Parse an alist matrix.

    Without explicit ``base_n``/``base_m`` the degree-1 extension is
    detected structurally and the base is everything above it.
    """
    lines = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    pos = 0

    def take(what: str, count: int | None = None) -> tuple[int, list[int]]:
        nonlocal pos
        if pos >= len(lines):
            raise AlistError(f"unexpected end of input while reading {what}",
                             lines[-1][0] if lines else None)
        no, toks = lines[pos]
        pos += 1
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise AlistError(f"non-integer token in {what}", no) from None
        if count is not None and len(vals) != count:
            raise AlistError(f"expected {count} values for {what}, got {len(vals)}", no)
        return no, vals

    no, (n, m) = take("header", 2)
    if n <= 0 or m <= 0:
        raise AlistError("dimensions must be positive", no)
    take("max degrees", 2)
    no_c, col_deg = take("column degrees", n)
    no_r, row_deg = take("row degrees", m)

    def read_lists(count: int, degrees: list[int], bound: int, what: str) -> list[list[int]]:
        out = []
        for k in range(count):
            no, vals = take(f"{what} {k + 1}")
            idx = [v for v in vals if v != 0]
            if vals[:len(idx)] != idx:
                raise AlistError(f"zero padding inside {what} {k + 1}", no)
            if len(idx) != degrees[k]:
                raise AlistError(f"{what} {k + 1} lists {len(idx)} entries, degree says {degrees[k]}", no)
            for v in idx:
                if not 1 <= v <= bound:
                    raise AlistError(f"index {v} out of range [1, {bound}] in {what} {k + 1}", no)
            if len(set(idx)) != len(idx):
                raise AlistError(f"duplicate entry in {what} {k + 1}", no)
            out.append([v - 1 for v in idx])
        return out

    col_start = lines[pos][0] if pos < len(lines) else None
    cols = read_lists(n, col_deg, m, "column")
    rows = read_lists(m, row_deg, n, "row")
    from_cols = {(i, j) for j, c in enumerate(cols) for i in c}
    from_rows = {(i, j) for i, r in enumerate(rows) for j in r}
    if from_cols != from_rows:
        raise AlistError("column lists and row lists describe different matrices", col_start)
    return SparsePCM.from_rows(rows, n, base_n, base_m)


def write_alist(pcm: SparsePCM) -> str:
    """Serialize to zero-padded alist text."""
    n, m = pcm.n_total, pcm.m_total
    rows = pcm.rows
    cols: list[list[int]] = [[] for _ in range(n)]
    for i, r in enumerate(rows):
        for j in r:
            cols[j].append(i)
    dv = max((len(c) for c in cols), default=0)
    dc = max((len(r) for r in rows), default=0)

    def padded(idx, width):
        vals = [v + 1 for v in idx] + [0] * (width - len(idx))
        return " ".join(map(str, vals))

    out = [f"{n} {m}", f"{dv} {dc}",
           " ".join(str(len(c)) for c in cols),
           " ".join(str(len(r)) for r in rows)]
    out += [padded(c, dv) for c in cols]
    out += [padded(r.tolist(), dc) for r in rows]
    return "\n".join(out) + "\n"
