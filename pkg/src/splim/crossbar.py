"""Logic-level model of a 1T1M memristor array.

A cell holding ``True`` is the low-resistance '1' state. Words are stored
MSB first: bit ``b-1`` of a word written at ``col_offset`` sits in column
``col_offset``. Row masks are boolean numpy vectors of length ``rows``.
"""

from __future__ import annotations

import numpy as np

from .cost import CostEvent, CostLedger, EnergyConfig, charge

DEFAULT_ROWS = 1024
DEFAULT_COLS = 1024
DEFAULT_WORD_BITS = 32


class Crossbar:
    def __init__(self, rows=DEFAULT_ROWS, cols=DEFAULT_COLS, word_bits=DEFAULT_WORD_BITS,
                 ledger: CostLedger | None = None):
        if rows <= 0 or cols <= 0 or word_bits <= 0:
            raise ValueError("crossbar dimensions and word size must be positive")
        if word_bits > 64:
            raise ValueError("word_bits above 64 is not supported")
        self.rows = rows
        self.cols = cols
        self.word_bits = word_bits
        self.cells = np.zeros((rows, cols), dtype=bool)
        self.column_buffer = np.zeros(cols, dtype=bool)
        self.ledger = ledger

    # addressing helpers

    def _check_row(self, row):
        if not 0 <= row < self.rows:
            raise IndexError(f"row {row} outside 0..{self.rows - 1}")

    def _check_word(self, col_offset):
        if col_offset < 0 or col_offset + self.word_bits > self.cols:
            raise IndexError(f"word at column {col_offset} does not fit in {self.cols} columns")

    def mask(self, rows=None):
        """Row mask with the given rows set (all rows when None)."""
        m = np.zeros(self.rows, dtype=bool)
        if rows is None:
            m[:] = True
        else:
            m[np.asarray(rows, dtype=np.int64)] = True
        return m

    def _as_mask(self, active):
        if active is None:
            return self.mask()
        active = np.asarray(active, dtype=bool)
        if active.shape != (self.rows,):
            raise ValueError(f"row mask must have length {self.rows}")
        return active

    # word access

    def write_word(self, row, col_offset, value):
        self._check_row(row)
        self._check_word(col_offset)
        value = int(value)
        if not 0 <= value < (1 << self.word_bits):
            raise ValueError(f"value {value} does not fit in {self.word_bits} bits")
        self.cells[row, col_offset:col_offset + self.word_bits] = _to_bits(value, self.word_bits)

    def read_word(self, row, col_offset):
        self._check_row(row)
        self._check_word(col_offset)
        return _from_bits(self.cells[row, col_offset:col_offset + self.word_bits])

    def write_words(self, rows, col_offset, values):
        """Bulk write of one word per listed row (plumbing, not charged)."""
        self._check_word(col_offset)
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= self.rows):
            raise IndexError("row outside the crossbar")
        self.cells[rows, col_offset:col_offset + self.word_bits] = words_to_bits(values, self.word_bits)

    def read_words(self, col_offset, rows=None):
        self._check_word(col_offset)
        block = self.cells[:, col_offset:col_offset + self.word_bits]
        if rows is not None:
            block = block[np.asarray(rows, dtype=np.int64)]
        return bits_to_words(block)

    def init_column(self, col, active=None):
        """Set a column to '1' in the active rows (NOR output preset)."""
        self.cells[self._as_mask(active), col] = True

    # primitives

    def nor_columns(self, inputs, output, active=None):
        """Array-level NOR: ``out = NOR(in_0, in_1, ...)`` in every active row.

        The output cell can only be switched from '1' to '0', so rows whose
        output was not preset keep their '0'.
        """
        inputs = [int(c) for c in inputs]
        if not inputs:
            raise ValueError("NOR needs at least one input column")
        if output in inputs:
            raise ValueError("output column overlaps an input column")
        for c in inputs + [output]:
            if not 0 <= c < self.cols:
                raise IndexError(f"column {c} outside the crossbar")
        active = self._as_mask(active)
        any_one = self.cells[:, inputs].any(axis=1)
        self.cells[active & any_one, output] = False
        charge(self.ledger, CostEvent("mult", cycles=1, valid_rows=int(active.sum()),
                                      total_rows=int(active.sum())))

    def min_search(self, col_offset, active=None):
        """In-situ minima search; returns ``(min_value, holders)``."""
        self._check_word(col_offset)
        active = self._as_mask(active)
        if not active.any():
            raise ValueError("min_search needs a non-empty active mask")
        value, (holders,) = _winnow([self.cells], col_offset, self.word_bits, [active])
        charge(self.ledger, CostEvent("search", cycles=self.word_bits, counter="searches", count=1))
        return value, holders

    def invalidate(self, col_offset, targets):
        """Set the sign bit of the word at ``col_offset`` in the target rows."""
        self._check_word(col_offset)
        targets = self._as_mask(targets)
        self.cells[targets, col_offset] = True

    def load_buffer(self, row):
        self._check_row(row)
        self.column_buffer[:] = self.cells[row]

    def store_buffer(self, row):
        self._check_row(row)
        self.cells[row] = self.column_buffer

    def dump(self, rows=None) -> str:
        """Bit-grid snapshot, one text line per row."""
        rows = range(self.rows) if rows is None else rows
        return "\n".join(f"{r:>5} " + "".join("1" if b else "0" for b in self.cells[r]) for r in rows)


def rowclone(src: Crossbar, dst: Crossbar, src_row, dst_row, ledger: CostLedger | None = None,
             energy: EnergyConfig | None = None):
    """Copy a row between arrays through their column buffers.

    Phases: read into the source buffer, move the buffer over the
    interconnect, write from the destination buffer.
    """
    if src.cols != dst.cols:
        raise ValueError("rowclone needs arrays with equal column counts")
    if src is dst and src_row == dst_row:
        return
    src.load_buffer(src_row)
    dst.column_buffer[:] = src.column_buffer
    dst.store_buffer(dst_row)
    if ledger is not None:
        nbytes = src.cols // 8
        ledger.charge(CostEvent("rowclone", cycles=2, counter="rowclones", count=1))
        xfer = (energy or ledger.energy_config).transfer_cycles(nbytes)
        ledger.charge(CostEvent("io", cycles=xfer, nbytes=nbytes))


class WideArray:
    """Several equal-height arrays presented as one wider logical array."""

    def __init__(self, members, ledger: CostLedger | None = None):
        members = list(members)
        if not members:
            raise ValueError("a wide array needs at least one member")
        if len({m.rows for m in members}) != 1:
            raise ValueError("all composed arrays must share the row count")
        if len({m.word_bits for m in members}) != 1:
            raise ValueError("all composed arrays must share the word size")
        self.members = members
        self.rows = members[0].rows
        self.word_bits = members[0].word_bits
        self.cols = sum(m.cols for m in members)
        self._starts = np.cumsum([0] + [m.cols for m in members])
        self.ledger = ledger

    def locate(self, col):
        """(member index, local column) owning logical column ``col``."""
        if not 0 <= col < self.cols:
            raise IndexError(f"column {col} outside 0..{self.cols - 1}")
        k = int(np.searchsorted(self._starts, col, side="right") - 1)
        return k, int(col - self._starts[k])

    def _column(self, col):
        k, c = self.locate(col)
        return self.members[k].cells[:, c]

    def _check_word(self, col_offset):
        if col_offset < 0 or col_offset + self.word_bits > self.cols:
            raise IndexError(f"word at column {col_offset} does not fit in {self.cols} columns")

    def write_word(self, row, col_offset, value):
        self._check_word(col_offset)
        bits = _to_bits(int(value), self.word_bits)
        for i, bit in enumerate(bits):
            k, c = self.locate(col_offset + i)
            self.members[k].cells[row, c] = bit

    def read_word(self, row, col_offset):
        self._check_word(col_offset)
        return _from_bits(np.array([self._column(col_offset + i)[row] for i in range(self.word_bits)]))

    def min_search(self, col_offset, active=None):
        self._check_word(col_offset)
        active = np.ones(self.rows, dtype=bool) if active is None else np.asarray(active, dtype=bool)
        if not active.any():
            raise ValueError("min_search needs a non-empty active mask")
        current = active.copy()
        value = 0
        for i in range(self.word_bits):
            cand = current & ~self._column(col_offset + i)
            value <<= 1
            if cand.any():
                current = cand
            else:
                value |= 1
        charge(self.ledger, CostEvent("search", cycles=self.word_bits, counter="searches", count=1))
        return value, current

    def invalidate(self, col_offset, targets):
        self._check_word(col_offset)
        k, c = self.locate(col_offset)
        self.members[k].cells[np.asarray(targets, dtype=bool), c] = True


def bss_compose(arrays) -> WideArray:
    arrays = list(arrays)
    return WideArray(arrays, ledger=arrays[0].ledger if arrays else None)


def lockstep_min_search(arrays, col_offset, actives, ledger: CostLedger | None = None, pes=1,
                        counter="searches"):
    """One minima search run simultaneously over many arrays.

    The controller ORs every column buffer, so a bit is settled to '0'
    as soon as any active row in any array holds '0' there. Charged once.
    """
    if not any(a.any() for a in actives):
        raise ValueError("min_search needs a non-empty active mask")
    word_bits = arrays[0].word_bits
    value, holders = _winnow([a.cells for a in arrays], col_offset, word_bits, actives)
    charge(ledger, CostEvent("search", cycles=word_bits, pes=pes, counter=counter, count=1))
    return value, holders


def _winnow(grids, col_offset, word_bits, actives):
    current = [np.asarray(a, dtype=bool).copy() for a in actives]
    value = 0
    for i in range(word_bits):
        col = col_offset + i
        cands = [cur & ~g[:, col] for cur, g in zip(current, grids)]
        value <<= 1
        if any(c.any() for c in cands):
            current = cands
        else:
            value |= 1
    return value, current


def _to_bits(value, word_bits):
    return np.array([(value >> (word_bits - 1 - i)) & 1 for i in range(word_bits)], dtype=bool)


def _from_bits(bits):
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def words_to_bits(values, word_bits):
    """(n,) unsigned words -> (n, word_bits) MSB-first bit matrix."""
    values = np.asarray(values, dtype=np.uint64)
    shifts = np.arange(word_bits - 1, -1, -1, dtype=np.uint64)
    return ((values[:, None] >> shifts) & np.uint64(1)).astype(bool)


def bits_to_words(bits):
    bits = np.asarray(bits, dtype=np.uint64)
    word_bits = bits.shape[-1]
    shifts = np.arange(word_bits - 1, -1, -1, dtype=np.uint64)
    return (bits << shifts).sum(axis=-1, dtype=np.uint64)
