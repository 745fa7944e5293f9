"""Sparse matrix ingestion, synthetic generators and sensitivity transforms.

Everything here works on :class:`CooMatrix`, an immutable, normalized
(sorted, duplicate-free) coordinate list backed by numpy arrays.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field

import numpy as np

INDEX_DTYPE = np.int64


class MatrixMarketError(ValueError):
    """Raised for malformed Matrix Market input; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class CooMatrix:
    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        for name in ("rows", "cols", "vals"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @classmethod
    def from_entries(cls, n_rows, n_cols, entries=(), *, allow_duplicates=False):
        """Build a normalized matrix from ``(row, col, val)`` triples."""
        entries = list(entries)
        if entries:
            r, c, v = zip(*entries)
        else:
            r, c, v = (), (), ()
        return cls.from_arrays(n_rows, n_cols, r, c, v, allow_duplicates=allow_duplicates)

    @classmethod
    def from_arrays(cls, n_rows, n_cols, rows, cols, vals, *, allow_duplicates=False):
        rows = np.asarray(rows, dtype=INDEX_DTYPE).ravel()
        cols = np.asarray(cols, dtype=INDEX_DTYPE).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have equal length")
        if n_rows < 0 or n_cols < 0:
            raise ValueError("negative matrix dimension")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                if not allow_duplicates:
                    k = int(np.flatnonzero(dup)[0])
                    raise ValueError(f"duplicate entry ({rows[k]}, {cols[k]})")
                # sum duplicates, keeping first-seen order inside each group
                keys = rows * max(n_cols, 1) + cols
                uniq, inverse = np.unique(keys, return_inverse=True)
                vals = np.bincount(inverse, weights=vals, minlength=uniq.size)
                rows, cols = uniq // max(n_cols, 1), uniq % max(n_cols, 1)
        return cls(int(n_rows), int(n_cols), rows.copy(), cols.copy(), vals.copy())

    @classmethod
    def empty(cls, n_rows, n_cols):
        return cls.from_arrays(n_rows, n_cols, [], [], [])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.rows.size)

    def entries(self):
        return [(int(r), int(c), float(v)) for r, c, v in zip(self.rows, self.cols, self.vals)]

    def row_counts(self):
        return np.bincount(self.rows, minlength=self.n_rows).astype(INDEX_DTYPE)

    def col_counts(self):
        return np.bincount(self.cols, minlength=self.n_cols).astype(INDEX_DTYPE)

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def drop_zeros(self):
        keep = self.vals != 0
        return CooMatrix.from_arrays(self.n_rows, self.n_cols, self.rows[keep],
                                     self.cols[keep], self.vals[keep])

    def __eq__(self, other):
        if not isinstance(other, CooMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.vals, other.vals))

    def __repr__(self):
        return f"CooMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


@dataclass(frozen=True)
class MatrixStats:
    nnz: int
    nnz_r: np.ndarray = field(repr=False)
    nnz_a: float
    sigma: float
    tau: float


def compute_stats(m: CooMatrix) -> MatrixStats:
    """Per-row non-zero statistics; sigma is the population deviation."""
    counts = m.row_counts()
    if m.n_rows == 0:
        return MatrixStats(0, counts, 0.0, 0.0, 0.0)
    nnz_a = float(counts.mean())
    sigma = float(counts.std())
    cells = m.n_rows * m.n_cols
    tau = m.nnz / cells if cells else 0.0
    return MatrixStats(m.nnz, counts, nnz_a, sigma, tau)


# -- Matrix Market ----------------------------------------------------------

_FIELDS = ("real", "integer", "pattern", "double")
_SYMMETRIES = ("general", "symmetric")


def parse_matrix_market(text) -> CooMatrix:
    """Parse a coordinate-format Matrix Market document.

    ``text`` may be a string or any iterable of lines. Symmetric files are
    expanded to both triangles and pattern entries get the value 1.0.
    """
    lines = text.splitlines() if isinstance(text, str) else (ln.rstrip("\n") for ln in text)
    it = enumerate(lines, start=1)

    try:
        lineno, header = next(it)
    except StopIteration:
        raise MatrixMarketError("empty input", 1) from None
    tokens = header.strip().split()
    if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("malformed header", lineno)
    obj, fmt, fld, sym = (t.lower() for t in tokens[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format '{obj} {fmt}'", lineno)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unsupported field '{fld}'", lineno)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry '{sym}'", lineno)
    pattern = fld == "pattern"

    size = None
    for lineno, line in it:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError("malformed size line", lineno)
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError("malformed size line", lineno) from None
        break
    if size is None:
        raise MatrixMarketError("missing size line", lineno)
    n_rows, n_cols, declared = size
    if min(size) < 0:
        raise MatrixMarketError("negative size", lineno)

    rows, cols, vals = [], [], []
    seen = {}
    stored = 0
    want = 2 if pattern else 3
    for lineno, line in it:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != want:
            raise MatrixMarketError(f"expected {want} fields, got {len(parts)}", lineno)
        try:
            r, c = int(parts[0]) - 1, int(parts[1]) - 1
            v = 1.0 if pattern else float(parts[2])
        except ValueError:
            raise MatrixMarketError("malformed entry", lineno) from None
        if not 0 <= r < n_rows:
            raise MatrixMarketError("row index out of range", lineno)
        if not 0 <= c < n_cols:
            raise MatrixMarketError("column index out of range", lineno)
        if (r, c) in seen:
            raise MatrixMarketError(f"duplicate entry ({r + 1}, {c + 1}), first on line {seen[(r, c)]}",
                                    lineno)
        seen[(r, c)] = lineno
        stored += 1
        rows.append(r)
        cols.append(c)
        vals.append(v)
        if sym == "symmetric" and r != c:
            if (c, r) in seen:
                raise MatrixMarketError(f"duplicate entry ({c + 1}, {r + 1}) in symmetric file", lineno)
            seen[(c, r)] = lineno
            rows.append(c)
            cols.append(r)
            vals.append(v)
    if stored != declared:
        raise MatrixMarketError(f"declared {declared} entries, found {stored}", lineno)
    return CooMatrix.from_arrays(n_rows, n_cols, rows, cols, vals)


def read_matrix_market(path) -> CooMatrix:
    with open(path, encoding="ascii") as fh:
        return parse_matrix_market(fh)


def serialize_matrix_market(m: CooMatrix, comment: str | None = None) -> str:
    """Emit ``m`` as a general real coordinate file (values round-trip exactly)."""
    out = ["%%MatrixMarket matrix coordinate real general"]
    if comment:
        out.extend(f"% {ln}" for ln in comment.splitlines())
    out.append(f"{m.n_rows} {m.n_cols} {m.nnz}")
    out.extend(f"{r + 1} {c + 1} {v!r}" for r, c, v in zip(m.rows.tolist(), m.cols.tolist(),
                                                           m.vals.tolist()))
    return "\n".join(out) + "\n"


def write_matrix_market(m: CooMatrix, path, comment=None):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(serialize_matrix_market(m, comment))


# -- generators -------------------------------------------------------------

def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _unit_values(rng, size):
    # uniform in (0, 1]
    return 1.0 - rng.random(size)


def gen_uniform(n: int, k: int, seed: int) -> CooMatrix:
    """n x n matrix with exactly k non-zeros in every row and every column.

    The pattern is a circulant with k distinct random offsets, then rows and
    columns are independently permuted, so each row's columns are a random
    k-subset while column counts stay exactly k (sigma = 0 on both axes).
    """
    if k < 0 or n < 0:
        raise ValueError("n and k must be non-negative")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    rng = _rng(seed)
    if k == 0 or n == 0:
        return CooMatrix.empty(n, n)
    offsets = rng.choice(n, size=k, replace=False)
    row_perm = rng.permutation(n)
    col_perm = rng.permutation(n)
    base = np.repeat(np.arange(n), k)
    cols = col_perm[(base + np.tile(offsets, n)) % n]
    rows = row_perm[base]
    return CooMatrix.from_arrays(n, n, rows, cols, _unit_values(rng, n * k))


def gen_random(n: int, density: float, seed: int, n_cols: int | None = None) -> CooMatrix:
    """Bernoulli-style matrix with round(density * n * n_cols) distinct entries."""
    n_cols = n if n_cols is None else n_cols
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    rng = _rng(seed)
    total = n * n_cols
    nnz = int(round(density * total))
    flat = rng.choice(total, size=nnz, replace=False) if nnz else np.empty(0, dtype=INDEX_DTYPE)
    return CooMatrix.from_arrays(n, n_cols, flat // max(n_cols, 1), flat % max(n_cols, 1),
                                 _unit_values(rng, nnz))


def gen_powerlaw(n: int, mean_k: float, seed: int, alpha: float = 1.5) -> CooMatrix:
    """Square matrix with heavy-tailed (Pareto) per-row counts around ``mean_k``."""
    rng = _rng(seed)
    if n == 0 or mean_k <= 0:
        return CooMatrix.empty(n, n)
    weights = rng.pareto(alpha, size=n) + 1.0
    counts = np.minimum(np.maximum(np.rint(weights / weights.mean() * mean_k), 0), n).astype(int)
    rows, cols = [], []
    for r, cnt in enumerate(counts):
        if cnt:
            rows.append(np.full(cnt, r))
            cols.append(rng.choice(n, size=cnt, replace=False))
    if not rows:
        return CooMatrix.empty(n, n)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return CooMatrix.from_arrays(n, n, rows, cols, _unit_values(rng, rows.size))


_GEN_RE = re.compile(r"^(\w+):(.*)$")
_GENERATORS = {
    "uniform": (gen_uniform, {"n": int, "k": int, "seed": int}),
    "random": (gen_random, {"n": int, "density": float, "seed": int}),
    "powerlaw": (gen_powerlaw, {"n": int, "mean_k": float, "seed": int, "alpha": float}),
}


def parse_generator_spec(spec: str):
    """Split ``"uniform:n=1024,k=16,seed=7"`` into (name, kwargs)."""
    m = _GEN_RE.match(spec.strip())
    if not m or m.group(1) not in _GENERATORS:
        raise ValueError(f"unknown generator spec '{spec}'")
    name, body = m.group(1), m.group(2)
    types = _GENERATORS[name][1]
    kwargs = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        key, _, value = part.partition("=")
        if key not in types:
            raise ValueError(f"generator '{name}' has no parameter '{key}'")
        kwargs[key] = types[key](value)
    kwargs.setdefault("seed", 0)
    return name, kwargs


def generate(spec: str) -> CooMatrix:
    name, kwargs = parse_generator_spec(spec)
    return _GENERATORS[name][0](**kwargs)


# -- transforms -------------------------------------------------------------

def transpose(m: CooMatrix) -> CooMatrix:
    return CooMatrix.from_arrays(m.n_cols, m.n_rows, m.cols, m.rows, m.vals)


def thin(m: CooMatrix, keep_fraction: float, seed: int) -> CooMatrix:
    """Keep ``round(keep_fraction * nnz)`` entries drawn without replacement."""
    if not 0.0 <= keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in [0, 1]")
    keep = int(round(keep_fraction * m.nnz))
    if keep == m.nnz:
        return m
    idx = np.sort(_rng(seed).choice(m.nnz, size=keep, replace=False))
    return CooMatrix.from_arrays(m.n_rows, m.n_cols, m.rows[idx], m.cols[idx], m.vals[idx])


def redistribute(m: CooMatrix, seed: int, target_sigma: float | None = None) -> CooMatrix:
    """Move entries from the heaviest rows to the lightest rows.

    One move takes a random entry of a currently-heaviest row and places it,
    value unchanged, in a random free column of a currently-lightest row.
    Stops when max - min row count is at most 1, when no move is possible,
    or (if ``target_sigma`` is given) as soon as the row-count standard
    deviation drops below the target. Ties break toward the lowest row index.
    """
    rng = _rng(seed)
    n = m.n_rows
    if n == 0 or m.nnz == 0:
        return m
    row_cols = [dict() for _ in range(n)]
    for r, c, v in zip(m.rows.tolist(), m.cols.tolist(), m.vals.tolist()):
        row_cols[r][c] = v
    counts = [len(d) for d in row_cols]
    s1, s2 = sum(counts), sum(c * c for c in counts)

    def sigma():
        mean = s1 / n
        return math.sqrt(max(s2 / n - mean * mean, 0.0))

    heavy = [(-c, r) for r, c in enumerate(counts)]
    light = [(c, r) for r, c in enumerate(counts)]
    heapq.heapify(heavy)
    heapq.heapify(light)

    def top(heap, sign):
        # lazy deletion: drop entries whose count is stale
        while heap:
            key, r = heap[0]
            if sign * key == counts[r]:
                return r
            heapq.heappop(heap)
        return None

    while True:
        if target_sigma is not None and sigma() < target_sigma:
            break
        h = top(heavy, -1)
        skipped = []
        dst = None
        while True:
            r = top(light, 1)
            if r is None or counts[h] - counts[r] <= 1:
                break
            if counts[r] < m.n_cols:
                dst = r
                break
            skipped.append(heapq.heappop(light))
        for item in skipped:
            heapq.heappush(light, item)
        if dst is None:
            break
        src_cols = sorted(row_cols[h])
        col = src_cols[int(rng.integers(len(src_cols)))]
        val = row_cols[h].pop(col)
        free = np.setdiff1d(np.arange(m.n_cols), np.fromiter(row_cols[dst], dtype=INDEX_DTYPE))
        new_col = int(free[int(rng.integers(free.size))])
        row_cols[dst][new_col] = val
        for r, delta in ((h, -1), (dst, 1)):
            s2 += (counts[r] + delta) ** 2 - counts[r] ** 2
            counts[r] += delta
            heapq.heappush(heavy, (-counts[r], r))
            heapq.heappush(light, (counts[r], r))

    rows, cols, vals = [], [], []
    for r, d in enumerate(row_cols):
        for c, v in d.items():
            rows.append(r)
            cols.append(c)
            vals.append(v)
    return CooMatrix.from_arrays(m.n_rows, m.n_cols, rows, cols, vals)
