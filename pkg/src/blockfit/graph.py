"""Compressed sparse row graphs, edge-list I/O and connected components."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "GraphFormatError",
    "SparseGraph",
    "load_edge_list",
    "load_named_edge_list",
    "read_named_labels",
    "write_edge_list",
    "read_labels",
    "write_labels",
    "degrees",
    "largest_connected_component",
]


class GraphFormatError(ValueError):
    """Raised for malformed edge lists or out-of-range node indices."""


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Immutable binary adjacency in CSR form.

    Undirected graphs store every edge in both directions and never carry
    diagonal entries. Bipartite graphs hold an ``n_rows x n_cols``
    bi-adjacency with no symmetry requirement.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    bipartite: bool = False
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        offsets.setflags(write=False)
        cols.setflags(write=False)
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        csr = sp.csr_matrix(
            (np.ones(cols.size, dtype=np.float64), cols, offsets),
            shape=(self.n_rows, self.n_cols),
        )
        csr.data.setflags(write=False)
        object.__setattr__(self, "_csr", csr)

    @property
    def edge_count(self) -> int:
        """Number of stored entries (twice the undirected edge count)."""
        return int(self.col_indices.size)

    @property
    def n_undirected_edges(self) -> int:
        return self.edge_count if self.bipartite else self.edge_count // 2

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def to_csr(self) -> sp.csr_matrix:
        """Read-only float CSR view used by the numeric kernels."""
        return self._csr

    def row(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def transpose(self) -> "SparseGraph":
        """Bi-adjacency transpose; identity on undirected graphs."""
        if not self.bipartite:
            return self
        t = self._csr.T.tocsr()
        t.sort_indices()
        return SparseGraph(self.n_cols, self.n_rows, t.indptr, t.indices,
                           bipartite=True)

    def validate(self) -> "SparseGraph":
        """Full invariant scan; raises ``GraphFormatError`` on violation."""
        off, cols = self.row_offsets, self.col_indices
        if off.size != self.n_rows + 1 or off[0] != 0:
            raise GraphFormatError("row_offsets must have length n_rows+1 "
                                   "and start at 0")
        if np.any(np.diff(off) < 0):
            raise GraphFormatError("row_offsets must be non-decreasing")
        if off[-1] != cols.size:
            raise GraphFormatError("row_offsets[-1] must equal len(col_indices)")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise GraphFormatError("column index out of range")
        # strictly increasing within rows: a non-increase is only allowed at a row start
        if cols.size > 1:
            bad = np.diff(cols) <= 0
            starts = np.zeros(cols.size - 1, dtype=bool)
            row_starts = off[1:-1]
            row_starts = row_starts[(row_starts > 0) & (row_starts < cols.size)]
            starts[row_starts - 1] = True
            if np.any(bad & ~starts):
                raise GraphFormatError("duplicate or unsorted column indices")
        if not self.bipartite:
            if self.n_rows != self.n_cols:
                raise GraphFormatError("undirected graph must be square")
            rows = np.repeat(np.arange(self.n_rows), np.diff(off))
            if np.any(rows == cols):
                raise GraphFormatError("diagonal entries are not allowed")
            if (self._csr != self._csr.T).nnz:
                raise GraphFormatError("adjacency is not symmetric")
        return self

    @classmethod
    def from_edges(cls, rows, cols, n_rows: int, n_cols: Optional[int] = None,
                   bipartite: bool = False) -> "SparseGraph":
        """Canonicalize an edge array: dedup, drop self-loops, symmetrize."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have the same length")
        n_cols = n_rows if n_cols is None else n_cols
        if not bipartite:
            if n_cols != n_rows:
                raise ValueError("undirected graph must be square")
            keep = rows != cols
            rows, cols = rows[keep], cols[keep]
            rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
        if rows.size and (rows.min() < 0 or cols.min() < 0):
            raise GraphFormatError("negative node index")
        if rows.size and (rows.max() >= n_rows or cols.max() >= n_cols):
            raise GraphFormatError("node index exceeds declared dimension")
        m = sp.coo_matrix((np.ones(rows.size), (rows, cols)),
                          shape=(n_rows, n_cols)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(n_rows, n_cols, m.indptr, m.indices, bipartite=bipartite)

    @classmethod
    def from_adjacency(cls, adjacency, bipartite: bool = False) -> "SparseGraph":
        """Build from any dense or scipy-sparse 0/1 matrix."""
        m = sp.csr_matrix(adjacency)
        coo = m.tocoo()
        keep = coo.data != 0
        r, c = coo.row[keep], coo.col[keep]
        if not bipartite:
            upper = r < c
            r, c = r[upper], c[upper]
        return cls.from_edges(r, c, m.shape[0], m.shape[1], bipartite=bipartite)

    def upper_edges(self) -> np.ndarray:
        """Edge array of shape (E, 2); each undirected edge once with i < j."""
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64),
                         np.diff(self.row_offsets))
        cols = self.col_indices
        if self.bipartite:
            return np.column_stack([rows, cols])
        keep = rows < cols
        return np.column_stack([rows[keep], cols[keep]])


def _read_text(source) -> str:
    if isinstance(source, os.PathLike) or (
            isinstance(source, str) and not any(c in source for c in "\n \t")):
        with open(source, "r") as fh:
            return fh.read()
    if hasattr(source, "read"):
        return source.read()
    return str(source)


def load_edge_list(source, one_based: bool = False,
                   bipartite_dims: Optional[Tuple[int, int]] = None,
                   n_nodes: Optional[int] = None) -> SparseGraph:
    """Parse a whitespace-separated edge list.

    ``source`` may be a path, an open file or the text itself. Lines that
    are blank or start with ``#`` are skipped. Without ``bipartite_dims``
    the result is undirected, with node count ``max index + 1`` unless
    ``n_nodes`` is given.
    """
    text = _read_text(source)
    rows, cols = [], []
    header = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if lineno == 1 and "n_rows=" in stripped:
                header = dict(tok.split("=", 1) for tok in stripped[1:].split()
                              if "=" in tok)
            continue
        tokens = stripped.split()
        if len(tokens) < 2:
            raise GraphFormatError(f"line {lineno}: expected two integer tokens")
        try:
            a, b = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphFormatError(
                f"line {lineno}: non-integer token in {stripped!r}") from None
        rows.append(a)
        cols.append(b)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if one_based:
        rows -= 1
        cols -= 1
    if header and bipartite_dims is None and n_nodes is None:
        try:
            hr, hc = int(header["n_rows"]), int(header["n_cols"])
            if int(header.get("bipartite", 0)):
                bipartite_dims = (hr, hc)
            else:
                n_nodes = hr
        except (KeyError, ValueError):
            raise GraphFormatError("line 1: malformed dimension header") from None
    if rows.size and (rows.min() < 0 or cols.min() < 0):
        raise GraphFormatError("negative node index (check --one-based)")
    if bipartite_dims is not None:
        m, n = bipartite_dims
        if rows.size and (rows.max() >= m or cols.max() >= n):
            raise GraphFormatError(
                f"node index exceeds declared dimensions {m}x{n}")
        return SparseGraph.from_edges(rows, cols, m, n, bipartite=True)
    top = int(max(rows.max(initial=-1), cols.max(initial=-1))) + 1
    if n_nodes is None:
        n_nodes = top
    elif top > n_nodes:
        raise GraphFormatError(f"node index {top - 1} exceeds n={n_nodes}")
    return SparseGraph.from_edges(rows, cols, n_nodes)


def load_named_edge_list(source) -> Tuple[SparseGraph, List[str]]:
    """Edge list with arbitrary string node IDs.

    IDs get contiguous indices in order of first appearance. Returns the
    undirected graph and the index-to-ID table.
    """
    text = _read_text(source)
    index: Dict[str, int] = {}
    rows, cols = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) < 2:
            raise GraphFormatError(f"line {lineno}: expected two node IDs")
        for tok, out in ((tokens[0], rows), (tokens[1], cols)):
            out.append(index.setdefault(tok, len(index)))
    g = SparseGraph.from_edges(np.asarray(rows, dtype=np.int64),
                               np.asarray(cols, dtype=np.int64), len(index))
    return g, list(index)


def read_named_labels(source, names: Sequence[str]) -> np.ndarray:
    """``ID label`` lines mapped onto the order of ``names``; every ID needs a label."""
    pos = {name: i for i, name in enumerate(names)}
    out = np.full(len(names), -1, dtype=np.int64)
    for lineno, line in enumerate(_read_text(source).splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) < 2:
            raise GraphFormatError(f"line {lineno}: expected 'ID label'")
        try:
            lab = int(tokens[1])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: bad label {tokens[1]!r}") from None
        if tokens[0] in pos:
            out[pos[tokens[0]]] = lab
    missing = np.flatnonzero(out < 0)
    if missing.size:
        raise GraphFormatError(f"no label for node {names[missing[0]]!r}")
    return out


def write_edge_list(g: SparseGraph, dest=None, one_based: bool = False) -> str:
    """Write the canonical edge list (``i < j`` for undirected graphs).

    Returns the text; also writes it to ``dest`` (path or file) if given.
    """
    edges = g.upper_edges() + (1 if one_based else 0)
    buf = io.StringIO()
    buf.write(f"# n_rows={g.n_rows} n_cols={g.n_cols} "
              f"bipartite={int(g.bipartite)}\n")
    np.savetxt(buf, edges, fmt="%d")
    text = buf.getvalue()
    if dest is not None:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w") as fh:
                fh.write(text)
    return text


def degrees(g: SparseGraph) -> np.ndarray:
    """Row degrees ``d_i``."""
    return np.diff(g.row_offsets)


def largest_connected_component(g: SparseGraph) -> Tuple[SparseGraph, np.ndarray]:
    """Subgraph on the largest component and the old-to-new index map.

    The map has length ``g.n_rows`` with ``-1`` for dropped nodes. Ties
    between equally large components go to the one holding the smallest
    node index.
    """
    if g.bipartite:
        raise ValueError("largest_connected_component requires an undirected graph")
    if g.n_rows == 0:
        raise ValueError("empty graph")
    _, comp = connected_components(g.to_csr(), directed=False)
    sizes = np.bincount(comp)
    # component ids are assigned in order of first node, so argmax breaks ties
    # toward the smallest minimum node index
    best = int(np.argmax(sizes))
    keep = np.flatnonzero(comp == best)
    mapping = np.full(g.n_rows, -1, dtype=np.int64)
    mapping[keep] = np.arange(keep.size)
    sub = g.to_csr()[keep][:, keep].tocsr()
    sub.sort_indices()
    return SparseGraph(keep.size, keep.size, sub.indptr, sub.indices), mapping


def read_labels(source, one_based: bool = False) -> np.ndarray:
    """One integer label per line; ``#`` comments allowed."""
    text = _read_text(source)
    vals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            vals.append(int(s.split()[-1]))
        except ValueError:
            raise GraphFormatError(f"line {lineno}: bad label {s!r}") from None
    out = np.asarray(vals, dtype=np.int64)
    return out - 1 if one_based else out


def write_labels(labels: Sequence[int], dest) -> None:
    text = "\n".join(str(int(x)) for x in labels) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)
