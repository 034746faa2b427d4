"""Areal adjacency, row-normalised weights and intrinsic CAR structure."""

from __future__ import annotations

import dataclasses
import warnings
from importlib import resources

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DataError, ParseError, RegionMismatchError

__all__ = [
    "SPAIN_REGIONS",
    "AdjacencyGraph",
    "CarStructure",
    "load_adjacency",
    "car_structure",
    "spain_graph",
    "path_graph",
]

SPAIN_REGIONS = (
    "AN", "AR", "AS", "CB", "CL", "CM", "CT", "EX",
    "GA", "MC", "MD", "NC", "PV", "RI", "VC",
)


@dataclasses.dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected neighbour structure over an ordered list of regions.

    ``neighbors[i]`` is the set of indices adjacent to region ``i``;
    ``W`` is the row-normalised weight matrix with ``W[i, j] = 1 / N[i]``
    for neighbours and 0 otherwise (rows of isolated regions are zero).
    """

    region_ids: tuple
    neighbors: tuple

    def __post_init__(self):
        object.__setattr__(self, "region_ids", tuple(self.region_ids))
        object.__setattr__(self, "neighbors", tuple(frozenset(int(j) for j in s) for s in self.neighbors))
        n = len(self.region_ids)
        if len(set(self.region_ids)) != n:
            raise DataError("duplicate region ids in graph")
        if len(self.neighbors) != n:
            raise DataError("neighbor list length does not match region count")
        for i, nb in enumerate(self.neighbors):
            if i in nb:
                raise DataError(f"self-loop on region {self.region_ids[i]!r}")
            for j in nb:
                if not 0 <= j < n:
                    raise DataError(f"neighbor index {j} out of range")
                if i not in self.neighbors[j]:
                    raise DataError(
                        f"asymmetric adjacency between {self.region_ids[i]!r} and {self.region_ids[j]!r}"
                    )

    @classmethod
    def from_pairs(cls, region_ids, pairs):
        region_ids = tuple(region_ids)
        pos = {r: k for k, r in enumerate(region_ids)}
        nb = [set() for _ in region_ids]
        for a, b in pairs:
            for key in (a, b):
                if key not in pos:
                    raise RegionMismatchError(f"unknown region key {key!r} in adjacency")
            i, j = pos[a], pos[b]
            if i == j:
                raise DataError(f"self-loop on region {a!r}")
            nb[i].add(j)
            nb[j].add(i)
        return cls(region_ids, tuple(nb))

    @property
    def n_regions(self):
        return len(self.region_ids)

    @property
    def N(self):
        return np.array([len(s) for s in self.neighbors], dtype=int)

    def adjacency(self):
        """Binary adjacency as a CSR matrix of ints."""
        n = self.n_regions
        rows = [i for i, s in enumerate(self.neighbors) for _ in s]
        cols = [j for s in self.neighbors for j in sorted(s)]
        return sp.csr_matrix((np.ones(len(rows), dtype=int), (rows, cols)), shape=(n, n))

    @property
    def W(self):
        A = self.adjacency().astype(float)
        N = self.N
        inv = np.divide(1.0, N, out=np.zeros(len(N)), where=N > 0)
        return sp.diags(inv) @ A

    def components(self):
        """Connected-component label per region (isolated regions get their own)."""
        _, labels = connected_components(self.adjacency(), directed=False)
        return labels

    def pairs(self):
        return [(i, j) for i, s in enumerate(self.neighbors) for j in sorted(s) if i < j]

    def permute(self, order):
        """Graph with regions re-listed in ``order`` (a permutation of indices)."""
        order = list(order)
        inv = {old: new for new, old in enumerate(order)}
        return AdjacencyGraph(
            tuple(self.region_ids[k] for k in order),
            tuple({inv[j] for j in self.neighbors[k]} for k in order),
        )

    def to_csv(self, path, which="W"):
        """Dense dump of ``W`` or ``Q`` with region ids as header."""
        M = self.W.toarray() if which == "W" else car_structure(self).Q
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("region," + ",".join(self.region_ids) + "\n")
            for r, row in zip(self.region_ids, M):
                fh.write(r + "," + ",".join(repr(float(x)) if which == "W" else str(int(x)) for x in row) + "\n")


@dataclasses.dataclass(frozen=True)
class CarStructure:
    """Intrinsic CAR precision structure ``Q = diag(N) - A``.

    ``Q`` is integer valued so row sums vanish exactly. ``rank_deficiency``
    counts connected components, isolated regions included.
    """

    Q: np.ndarray
    rank_deficiency: int
    components: np.ndarray

    @property
    def rank(self):
        return self.Q.shape[0] - self.rank_deficiency

    def constraint_basis(self):
        """Orthonormal basis of the constrained space for a structured effect.

        Columns span ``{u : u sums to zero on every component, u = 0 on
        isolated regions}``, which has dimension ``rank``. Sampling the
        coordinates and mapping through this basis is exact conditioning
        on the sum-to-zero constraints.
        """
        n = self.Q.shape[0]
        blocks = []
        for c in np.unique(self.components):
            idx = np.flatnonzero(self.components == c)
            if idx.size < 2:
                continue
            B = np.zeros((n, idx.size - 1))
            B[idx] = sla.null_space(np.ones((1, idx.size)))
            blocks.append(B)
        if not blocks:
            return np.zeros((n, 0))
        return np.hstack(blocks)

    def recentre(self, u):
        """Subtract each component's mean; zero isolated regions."""
        u = np.array(u, dtype=float, copy=True)
        for c in np.unique(self.components):
            idx = self.components == c
            u[idx] = 0.0 if idx.sum() < 2 else u[idx] - u[idx].mean()
        return u


def car_structure(graph):
    A = graph.adjacency().toarray()
    Q = np.diag(A.sum(axis=1)) - A
    labels = graph.components()
    return CarStructure(Q=Q, rank_deficiency=int(labels.max() + 1) if len(labels) else 0, components=labels)


def load_adjacency(path, region_ids=None, strict=False):
    """Read an undirected neighbour pair list.

    One pair per line, two region keys separated by whitespace; ``#`` starts
    a comment. If the file lists pairs in both directions it is read as a
    directed listing, and a pair given in one direction only is either
    symmetrised with a warning or, with ``strict=True``, rejected.

    Regions in ``region_ids`` that never appear get no neighbours. With
    ``region_ids=None`` the sorted set of keys in the file is used.
    """
    if region_ids is None:
        region_ids = sorted(_file_keys(path))
    region_ids = tuple(region_ids)
    known = set(region_ids)
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            tok = text.split()
            if len(tok) != 2:
                raise ParseError(f"{path}:{lineno}: expected two region keys, got {text!r}", row=lineno)
            for key in tok:
                if key not in known:
                    raise RegionMismatchError(f"{path}:{lineno}: unknown region key {key!r}")
            pairs.append(tuple(tok))

    directed = set(pairs)
    if any((b, a) in directed for a, b in directed if a != b):
        one_way = sorted((a, b) for a, b in directed if (b, a) not in directed)
        if one_way:
            msg = f"asymmetric neighbour listing in {path}: {one_way[:5]}"
            if strict:
                raise DataError(msg)
            warnings.warn(msg + "; symmetrising", RuntimeWarning, stacklevel=2)
    return AdjacencyGraph.from_pairs(region_ids, pairs)


def _file_keys(path):
    keys = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            keys.update(line.split("#", 1)[0].split())
    return keys


def spain_graph():
    """Contiguity graph of the 15 peninsular Spanish autonomous communities."""
    src = resources.files("segspat") / "data" / "spain_peninsular.adj"
    with resources.as_file(src) as path:
        return load_adjacency(path, SPAIN_REGIONS)


def path_graph(n, prefix="R"):
    """Chain ``R01 - R02 - ... - Rn``; handy default for small synthetic panels."""
    width = max(2, len(str(n)))
    ids = tuple(f"{prefix}{k + 1:0{width}d}" for k in range(n))
    return AdjacencyGraph.from_pairs(ids, [(ids[k], ids[k + 1]) for k in range(n - 1)])
