"""Coefficient graphs and the Laplacian-type penalty matrices derived from them.

Vertices are 0-based coefficient indices; grid vertices are numbered row-major,
so cell ``(r, c)`` of an ``rows x cols`` grid is vertex ``r * cols + c``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError, InvalidPenaltyError

PSD_TOL = 1e-8
EIG_KEEP = 1e-12


@dataclass(frozen=True)
class StructuredGraph:
    """Weighted undirected loop-free graph over ``n_vertices`` coefficients.

    Each unordered pair is stored once as ``(j, k, w)`` with ``j < k``.
    """

    n_vertices: int
    edges: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        if self.n_vertices < 1:
            raise InvalidDimensionError("graph needs at least one vertex")
        seen = {}
        for j, k, w in self.edges:
            if j == k:
                raise InvalidParameterError(f"self-loop at vertex {j}")
            if not (0 <= j < self.n_vertices and 0 <= k < self.n_vertices):
                raise InvalidParameterError(f"edge ({j}, {k}) out of range")
            key = (min(j, k), max(j, k))
            if key in seen and seen[key] != w:
                raise InvalidParameterError(f"conflicting weights for edge {key}")
            seen[key] = w
        canonical = tuple(sorted((j, k, float(w)) for (j, k), w in seen.items()))
        object.__setattr__(self, "edges", canonical)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[float]]) -> "StructuredGraph":
        out = []
        for e in edges:
            j, k = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            out.append((min(j, k), max(j, k), w))
        return cls(n, tuple(out))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        """Weighted degree sum_k |w(j, k)| of each vertex."""
        deg = np.zeros(self.n_vertices)
        for j, k, w in self.edges:
            deg[j] += abs(w)
            deg[k] += abs(w)
        return deg

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for j, k, _ in self.edges:
            adj[j].append(k)
            adj[k].append(j)
        return adj

    def edge_set(self) -> set[tuple[int, int]]:
        return {(j, k) for j, k, _ in self.edges}

    def to_json(self) -> dict:
        return {"n": self.n_vertices, "edges": [[j, k, w] for j, k, w in self.edges]}

    @classmethod
    def from_json(cls, obj: dict) -> "StructuredGraph":
        try:
            n = int(obj["n"])
            edges = obj.get("edges", [])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParameterError(f"malformed graph JSON: {exc}") from exc
        return cls.from_edges(n, edges)


def save_graph(graph: StructuredGraph, path) -> None:
    Path(path).write_text(json.dumps(graph.to_json()))


def load_graph(path) -> StructuredGraph:
    return StructuredGraph.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PenaltyMatrix:
    """Symmetric PSD matrix ``lambda_matrix`` with factor ``Q`` so that ``Q.T @ Q`` equals it."""

    lambda_matrix: np.ndarray
    factor: np.ndarray
    source: str = field(default="matrix", compare=False)

    def __post_init__(self):
        lam = np.asarray(self.lambda_matrix, dtype=float)
        q = np.asarray(self.factor, dtype=float).reshape(-1, lam.shape[0])
        lam.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "lambda_matrix", lam)
        object.__setattr__(self, "factor", q)

    @property
    def dim(self) -> int:
        return self.lambda_matrix.shape[0]

    @property
    def rank(self) -> int:
        return self.factor.shape[0]

    def submatrix(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        return self.lambda_matrix[np.ix_(idx, idx)]


def build_path(p: int) -> StructuredGraph:
    if p < 1:
        raise InvalidDimensionError("path needs p >= 1")
    return StructuredGraph(p, tuple((j, j + 1, 1.0) for j in range(p - 1)))


def build_grid(rows: int, cols: int) -> StructuredGraph:
    if rows < 1 or cols < 1:
        raise InvalidDimensionError("grid dimensions must be >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1, 1.0))
            if r + 1 < rows:
                edges.append((v, v + cols, 1.0))
    return StructuredGraph(rows * cols, tuple(edges))


def cartesian_product(g1: StructuredGraph, g2: StructuredGraph) -> StructuredGraph:
    """Cartesian product; vertex ``(u1, u2)`` maps to ``u1 * g2.n_vertices + u2``."""
    n1, n2 = g1.n_vertices, g2.n_vertices
    edges = []
    for u1 in range(n1):
        for a, b, w in g2.edges:
            edges.append((u1 * n2 + a, u1 * n2 + b, w))
    for u2 in range(n2):
        for a, b, w in g1.edges:
            edges.append((a * n2 + u2, b * n2 + u2, w))
    return StructuredGraph(n1 * n2, tuple(edges))


def build_knn(points, k: int, metric: str = "euclidean") -> StructuredGraph:
    """Symmetrized k-nearest-neighbor graph with unit weights.

    Args:
        points: ``(n, d)`` coordinates, or an ``(n, n)`` distance matrix when
            ``metric="precomputed"``.
        k: number of neighbors per vertex. Ties go to the smaller index.
        metric: ``"euclidean"`` or ``"precomputed"``.
    """
    pts = np.asarray(points, dtype=float)
    if metric == "euclidean":
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise InvalidParameterError("points must be a 2-d array")
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    elif metric == "precomputed":
        dist = pts
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise InvalidParameterError("precomputed distances must be square")
    else:
        raise InvalidParameterError(f"unknown metric {metric!r}")
    n = dist.shape[0]
    if k < 1 or k >= n:
        raise InvalidParameterError(f"k must satisfy 1 <= k < n_points (k={k}, n={n})")
    dist = dist.copy()
    np.fill_diagonal(dist, np.inf)
    edges = set()
    for j in range(n):
        for nb in np.argsort(dist[j], kind="stable")[:k]:
            nb = int(nb)
            edges.add((min(j, nb), max(j, nb)))
    return StructuredGraph(n, tuple((j, m, 1.0) for j, m in sorted(edges)))


def is_connected(g: StructuredGraph) -> bool:
    adj = g.neighbors()
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == g.n_vertices


def laplacian_of(g: StructuredGraph) -> PenaltyMatrix:
    """Penalty matrix with weighted degrees on the diagonal and ``-w`` off it.

    The factor is the signed incidence matrix: one row
    ``sqrt|w| (e_j - sign(w) e_k)`` per edge, which reproduces the matrix
    exactly for any sign pattern.
    """
    p = g.n_vertices
    lam = np.zeros((p, p))
    q = np.zeros((g.n_edges, p))
    for row, (j, k, w) in enumerate(g.edges):
        lam[j, j] += abs(w)
        lam[k, k] += abs(w)
        lam[j, k] -= w
        lam[k, j] -= w
        r = np.sqrt(abs(w))
        q[row, j] = r
        q[row, k] = -np.sign(w) * r
    _assert_psd(lam)
    return PenaltyMatrix(lam, q, source="graph")


def penalty_from_matrix(matrix) -> PenaltyMatrix:
    """Wrap a user-supplied symmetric PSD matrix, factoring it by eigendecomposition."""
    lam = np.asarray(matrix, dtype=float)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise InvalidPenaltyError("penalty matrix must be square")
    if not np.allclose(lam, lam.T, atol=1e-12, rtol=0):
        raise InvalidPenaltyError("penalty matrix must be symmetric")
    lam = 0.5 * (lam + lam.T)
    evals, evecs = np.linalg.eigh(lam)
    if evals.size and evals[0] < -PSD_TOL:
        raise InvalidPenaltyError(
            f"penalty matrix is not positive semidefinite (min eigenvalue {evals[0]:.3g})"
        )
    keep = evals > EIG_KEEP
    q = np.sqrt(evals[keep])[:, None] * evecs[:, keep].T
    return PenaltyMatrix(lam, q, source="matrix")


def identity_penalty(p: int) -> PenaltyMatrix:
    if p < 1:
        raise InvalidDimensionError("p must be >= 1")
    return PenaltyMatrix(np.eye(p), np.eye(p), source="identity")


def zero_penalty(p: int) -> PenaltyMatrix:
    if p < 1:
        raise InvalidDimensionError("p must be >= 1")
    return PenaltyMatrix(np.zeros((p, p)), np.zeros((0, p)), source="zero")


def _assert_psd(lam: np.ndarray) -> None:
    if lam.shape[0] == 0:
        return
    smallest = np.linalg.eigvalsh(lam)[0]
    if smallest < -PSD_TOL:
        raise InvalidPenaltyError(
            f"penalty matrix is not positive semidefinite (min eigenvalue {smallest:.3g})"
        )


def energy(lam: PenaltyMatrix, beta) -> float:
    """Quadratic form beta' L beta."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (lam.dim,):
        raise InvalidDimensionError(f"beta has shape {beta.shape}, expected ({lam.dim},)")
    return float(beta @ lam.lambda_matrix @ beta)


def edge_energy(g: StructuredGraph, beta) -> float:
    """Edge-sum form: sum over distinct edges of |w| (b_j - sign(w) b_k)^2."""
    beta = np.asarray(beta, dtype=float)
    return float(sum(abs(w) * (beta[j] - np.sign(w) * beta[k]) ** 2 for j, k, w in g.edges))


def write_triplets(lam: PenaltyMatrix, path) -> None:
    """Write the nonzero entries as ``j k value`` lines."""
    rows, cols = np.nonzero(lam.lambda_matrix)
    lines = [f"{j} {k} {float(lam.lambda_matrix[j, k])!r}" for j, k in zip(rows, cols)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_triplets(path, p: int) -> np.ndarray:
    out = np.zeros((p, p))
    for line in Path(path).read_text().splitlines():
        if line.strip():
            j, k, v = line.split()
            out[int(j), int(k)] = float(v)
    return out


def parse_graph_spec(spec: str, p: int) -> StructuredGraph | None:
    """Resolve a builder string (``path``, ``grid:RxC``, ``identity``, a JSON path).

    Returns ``None`` for ``identity`` (no graph; the penalty is the identity matrix).
    ``knn:K`` needs coordinates and is handled by callers that have them.
    """
    if spec == "identity":
        return None
    if spec == "path":
        return build_path(p)
    if spec.startswith("grid:"):
        try:
            r, c = (int(v) for v in spec[5:].lower().split("x"))
        except ValueError as exc:
            raise InvalidParameterError(f"bad grid spec {spec!r}, expected grid:RxC") from exc
        return build_grid(r, c)
    if spec.startswith("knn:"):
        raise InvalidParameterError("knn graphs need vertex coordinates (use --coords)")
    return load_graph(spec)
