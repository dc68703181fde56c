"""Multi-view design matrices: typed blocks, standardization, CSV I/O."""

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ParseError, RejectedInputError


class Domain(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    COUNT = "count"
    PROPORTION = "proportion"


def as_domain(domain):
    if isinstance(domain, Domain):
        return domain
    try:
        return Domain(str(domain).lower())
    except ValueError:
        raise RejectedInputError(f"unknown block domain {domain!r}") from None


@dataclass(frozen=True)
class Block:
    """A typed view occupying columns ``[start, stop)`` of the design."""

    name: str
    domain: Domain
    start: int
    stop: int

    def __post_init__(self):
        object.__setattr__(self, "domain", as_domain(self.domain))
        if not 0 <= self.start < self.stop:
            raise RejectedInputError(
                f"block {self.name!r} has invalid column range [{self.start}, {self.stop})"
            )

    @property
    def p(self):
        return self.stop - self.start

    @property
    def columns(self):
        return slice(self.start, self.stop)

    @property
    def indices(self):
        return np.arange(self.start, self.stop)


def blocks_from_widths(widths, domains, names=None):
    """Contiguous blocks with the given widths, in order."""
    if len(widths) != len(domains):
        raise RejectedInputError("widths and domains must have equal length")
    names = names or [f"X{k + 1}" for k in range(len(widths))]
    blocks, start = [], 0
    for name, width, domain in zip(names, widths, domains):
        blocks.append(Block(name, domain, start, start + int(width)))
        start += int(width)
    return blocks


def check_coverage(blocks, p):
    """Block ranges must be disjoint and tile [0, p) exactly."""
    if not blocks:
        raise RejectedInputError("at least one block is required")
    names = [b.name for b in blocks]
    if len(set(names)) != len(names):
        raise RejectedInputError(f"duplicate block names: {names}")
    pos = 0
    for block in sorted(blocks, key=lambda b: b.start):
        if block.start != pos:
            raise RejectedInputError(
                f"blocks do not tile the columns: gap or overlap at column {pos}"
            )
        pos = block.stop
    if pos != p:
        raise RejectedInputError(f"blocks cover {pos} columns, design has {p}")


def validate_domains(raw, blocks, names=None):
    """Check the per-domain value constraints of each block on raw data.

    Raises :class:`ParseError` naming the first offending cell.
    """
    raw = np.asarray(raw, dtype=float)
    for block in blocks:
        sub = raw[:, block.columns]
        if block.domain is Domain.BINARY:
            bad = ~((sub == 0) | (sub == 1))
            what = "binary value outside {0, 1}"
        elif block.domain is Domain.COUNT:
            bad = (sub < 0) | (sub != np.round(sub))
            what = "count value not a non-negative integer"
        elif block.domain is Domain.PROPORTION:
            bad = (sub < 0) | (sub > 1)
            what = "proportion value outside [0, 1]"
        else:
            continue
        if bad.any():
            i, j = np.argwhere(bad)[0]
            col = block.start + int(j)
            label = names[col] if names is not None else col
            raise ParseError(f"domain violation in block {block.name!r}: {what}",
                             row=int(i) + 1, column=label)


@dataclass(frozen=True)
class MultiViewDesign:
    """An n x p design split into K typed blocks.

    ``col_means`` and ``col_sds`` are the statistics of the raw columns, so
    coefficients fit on ``X`` map back to raw scale as ``beta / col_sds``.
    """

    X: np.ndarray
    blocks: tuple
    col_means: np.ndarray
    col_sds: np.ndarray
    standardized: bool = True
    column_names: tuple = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise RejectedInputError(f"design must be 2-d, got shape {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "blocks", tuple(self.blocks))
        check_coverage(self.blocks, X.shape[1])
        if self.column_names is not None:
            object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def K(self):
        return len(self.blocks)

    @property
    def widths(self):
        return [b.p for b in self.blocks]

    def block_matrix(self, k):
        return self.X[:, self.blocks[k].columns]

    def block_of(self, j):
        """Index of the block containing column ``j``."""
        for k, block in enumerate(self.blocks):
            if block.start <= j < block.stop:
                return k
        raise IndexError(j)

    def names(self):
        if self.column_names is not None:
            return list(self.column_names)
        return [f"{b.name}_{j}" for b in self.blocks for j in range(b.p)]

    def to_raw_scale(self, beta):
        """Back-transform standardized-scale coefficients to raw scale."""
        beta = np.asarray(beta, dtype=float)
        if not self.standardized:
            return beta.copy()
        return beta / self.col_sds

    def subset_columns(self, keep):
        """Design restricted to the columns in ``keep`` (sorted), blocks shrunk accordingly."""
        keep = np.sort(np.asarray(keep, dtype=int))
        blocks, start = [], 0
        for block in self.blocks:
            width = int(np.sum((keep >= block.start) & (keep < block.stop)))
            if width:
                blocks.append(Block(block.name, block.domain, start, start + width))
                start += width
        names = None
        if self.column_names is not None:
            names = [self.column_names[j] for j in keep]
        return MultiViewDesign(self.X[:, keep], blocks, self.col_means[keep],
                               self.col_sds[keep], self.standardized, names)


def standardize(raw, blocks, names=None):
    """Center each column and scale it to unit sample sd (n - 1 denominator)."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise RejectedInputError(f"need a 2-d matrix with at least 2 rows, got {raw.shape}")
    blocks = list(blocks)
    check_coverage(blocks, raw.shape[1])
    means = raw.mean(axis=0)
    centered = raw - means
    sds = np.sqrt((centered ** 2).sum(axis=0) / (raw.shape[0] - 1))
    scale = np.maximum(np.abs(means), 1.0)
    constant = np.flatnonzero(sds <= 1e-12 * scale)
    if constant.size:
        j = int(constant[0])
        label = names[j] if names is not None else j
        raise RejectedInputError(f"column {label!r} is constant and cannot be standardized")
    X = centered / sds
    return MultiViewDesign(X, blocks, means, sds, True, names)


def schema_blocks(schema, header):
    """Resolve a block schema against CSV headers.

    ``schema`` maps block name to ``{"domain": ..., "columns": [headers]}``;
    block order follows the mapping order. Returns ``(column_order, blocks)``
    where ``column_order`` indexes into ``header``.
    """
    position = {name: i for i, name in enumerate(header)}
    order, widths, domains, names = [], [], [], []
    seen = set()
    for block_name, entry in schema.items():
        if "domain" not in entry or "columns" not in entry:
            raise RejectedInputError(f"schema entry {block_name!r} needs 'domain' and 'columns'")
        cols = list(entry["columns"])
        if not cols:
            raise RejectedInputError(f"schema block {block_name!r} has no columns")
        for col in cols:
            if col not in position:
                raise ParseError("schema column not found in header", column=col)
            if col in seen:
                raise RejectedInputError(f"column {col!r} assigned to more than one block")
            seen.add(col)
            order.append(position[col])
        widths.append(len(cols))
        domains.append(as_domain(entry["domain"]))
        names.append(block_name)
    return order, blocks_from_widths(widths, domains, names)


def load_csv(path, schema):
    """Read a samples-by-features CSV into ``(raw, blocks, column_names)``.

    Columns are reordered so each block is contiguous, in schema order.
    Header columns not named in the schema are ignored.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file") from None
        order, blocks = schema_blocks(schema, header)
        rows = []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(record)}", row=r)
            values = []
            for j in order:
                cell = record[j].strip()
                if cell == "" or cell.lower() in ("na", "nan"):
                    raise ParseError("missing value", row=r, column=header[j])
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric value {cell!r}", row=r,
                                     column=header[j]) from None
                if not math.isfinite(value):
                    raise ParseError(f"non-finite value {cell!r}", row=r, column=header[j])
                values.append(value)
            rows.append(values)
    if not rows:
        raise RejectedInputError("dataset has no data rows")
    raw = np.array(rows, dtype=float)
    names = [header[j] for j in order]
    validate_domains(raw, blocks, names)
    return raw, blocks, names


def write_csv(path, raw, names):
    """Write a matrix with a header row; floats use the shortest exact round-trip form."""
    raw = np.asarray(raw, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in raw:
            writer.writerow([repr(float(v)) for v in row])


def schema_for(blocks, names):
    """The schema mapping that :func:`load_csv` needs to read back ``names``."""
    return {b.name: {"domain": b.domain.value, "columns": list(names[b.columns])}
            for b in blocks}
