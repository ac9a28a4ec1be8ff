"""Hierarchical subspace clustering by repeated 2-way spectral splits.

The representation solver is run once; its thresholded affinity matrix is
reused at every level. Levels 1 and 2 split unconditionally; deeper levels
split a cluster only when a child subspace fits its samples enough better
than the parent subspace and both child dimensions clear a minimum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .linalg import RANK_TOL, as_matrix, fix_eigvec_signs
from .solver import (
    FeatureMatrix,
    SolverConfig,
    build_affinity,
    cslrr_solve,
    threshold_coefficients,
)
from .spectral import spectral_cluster

# Mean parent errors at or below this are considered already perfect; the
# relative-gain split test is then vacuous and reports zero gain.
PERFECT_FIT_TOL = 1e-12

TREE_MAGIC = b"UOST"
TREE_VERSION = 1


@dataclass
class HierarchyConfig:
    """Splitting parameters: depth, energy threshold, gain threshold, min dimension."""

    max_level: int
    gamma: float = 0.98
    split_gain: float = 0.01
    min_dim: int = 1

    def __post_init__(self):
        if self.max_level < 1:
            raise ConfigError("max_level must be >= 1")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must be in (0, 1]")
        if self.split_gain < 0:
            raise ConfigError("split_gain must be nonnegative")
        if self.min_dim < 1:
            raise ConfigError("min_dim must be >= 1")


@dataclass
class SubspaceNode:
    node_id: int
    level: int
    indices: np.ndarray  # sorted sample indices
    basis: np.ndarray  # m x dim, orthonormal columns
    dim: int
    divisible: bool
    children: tuple[int, int] | None = None

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass
class HierarchyTree:
    nodes: list[SubspaceNode]
    max_level: int
    n_samples: int
    solver_converged: bool
    solver_iterations: int = 0

    def node(self, node_id: int) -> SubspaceNode:
        return self.nodes[node_id]

    def leaves(self) -> list[SubspaceNode]:
        return [n for n in self.nodes if n.children is None]

    def partition_at(self, level: int) -> list[SubspaceNode]:
        """Clusters active at `level`: nodes split no earlier than level+1."""
        if not 1 <= level <= self.max_level:
            raise DimensionError(f"level must be in [1, {self.max_level}]")
        return [
            n
            for n in self.nodes
            if n.level == level or (n.level < level and n.children is None)
        ]

    def _labels(self, nodes: list[SubspaceNode]) -> np.ndarray:
        labels = np.full(self.n_samples, -1, dtype=int)
        for pos, n in enumerate(nodes):
            labels[n.indices] = pos
        return labels

    def leaf_labels(self) -> np.ndarray:
        return self._labels(self.leaves())

    def labels_at(self, level: int) -> np.ndarray:
        return self._labels(self.partition_at(level))


def estimate_subspace(xc, gamma: float) -> tuple[np.ndarray, int]:
    """Estimate an orthonormal basis and dimension from the cluster samples.

    The leading covariance eigenvectors are taken from a thin SVD of the
    columns (identical spans, better conditioned than forming the
    covariance); the dimension is the smallest count whose leading-energy
    fraction reaches gamma, with singular values below the rank cutoff
    counted as zero energy.
    """
    xc = as_matrix(xc, "cluster data")
    if not 0 < gamma <= 1:
        raise ConfigError("gamma must be in (0, 1]")
    if not np.any(xc):
        raise DataError("cluster contains only zero vectors")
    u_full, svals, _ = np.linalg.svd(xc, full_matrices=False)
    svals = np.where(svals > RANK_TOL * max(1.0, svals[0]), svals, 0.0)
    energies = svals**2
    total = energies.sum()
    if total <= 0:
        raise DataError("cluster energy is numerically zero")
    fractions = np.cumsum(energies) / total
    d = int(np.searchsorted(fractions, gamma) + 1)
    d = min(d, int(np.count_nonzero(svals)))
    return fix_eigvec_signs(u_full[:, :d]), d


def relative_error(x, basis) -> float:
    """Squared residual of projecting x onto the basis span, relative to ||x||^2."""
    x = np.asarray(x, dtype=float).ravel()
    sq = float(x @ x)
    if sq <= 0:
        raise DataError("cannot project a zero vector")
    resid = x - basis @ (basis.T @ x)
    return float(np.clip((resid @ resid) / sq, 0.0, 1.0))


def mean_relative_error(xs: np.ndarray, basis: np.ndarray) -> float:
    """Mean of relative_error over the columns of xs."""
    sq = (xs * xs).sum(axis=0)
    if np.any(sq <= 0):
        raise DataError("cannot project a zero vector")
    proj = basis @ (basis.T @ xs)
    resid = ((xs - proj) ** 2).sum(axis=0)
    return float(np.mean(np.clip(resid / sq, 0.0, 1.0)))


def _bisect(indices: np.ndarray, w: np.ndarray, seed: int):
    """2-way spectral split of the affinity submatrix; None if a side is empty."""
    sub = w[np.ix_(indices, indices)]
    labels = spectral_cluster(sub, 2, seed)
    left = indices[labels == 0]
    right = indices[labels == 1]
    if len(left) == 0 or len(right) == 0:
        return None
    return left, right


def try_split(
    node: SubspaceNode,
    x: FeatureMatrix,
    w: np.ndarray,
    cfg: HierarchyConfig,
    seed: int,
):
    """Attempt to split a divisible node at the next level.

    Bisects the node's affinity submatrix, estimates the child subspaces,
    and accepts the split when the mean relative representation error of a
    child improves on the parent's by at least split_gain (fractionally)
    for either child, and both child dimensions are at least min_dim.
    Returns ((indices, basis, dim), (indices, basis, dim)) on acceptance;
    on rejection marks the node a leaf and returns None.
    """
    if not node.divisible or node.size < 2:
        raise ConfigError("try_split requires a divisible node with >= 2 samples")
    sides = _bisect(node.indices, w, seed)
    if sides is None:
        node.divisible = False
        return None
    children = []
    gains = []
    for idx in sides:
        xc = x.data[:, idx]
        u, d = estimate_subspace(xc, cfg.gamma)
        delta = mean_relative_error(xc, node.basis)
        zeta = mean_relative_error(xc, u)
        gain = 0.0 if delta <= PERFECT_FIT_TOL else (delta - zeta) / delta
        children.append((idx, u, d))
        gains.append(gain)
    dims_ok = min(children[0][2], children[1][2]) >= cfg.min_dim
    if (max(gains) >= cfg.split_gain) and dims_ok:
        return tuple(children)
    node.divisible = False
    return None


def hcs_lrr(
    x: FeatureMatrix,
    solver_config: SolverConfig,
    hier_config: HierarchyConfig,
    seed: int,
) -> HierarchyTree:
    """Build the full hierarchy from one solver run.

    The solver's embedding width is forced to 2**max_level (the largest
    possible leaf count). Levels 1 and 2 split unconditionally; levels
    p >= 2 apply the try_split acceptance rule. Solver non-convergence is
    recorded on the tree rather than raised.
    """
    n = x.n_samples
    if n < 4:
        raise DimensionError("need at least 4 samples")
    p_max = hier_config.max_level
    scfg = replace(solver_config, l_max=2**p_max)
    result = cslrr_solve(x, scfg)
    w = build_affinity(threshold_coefficients(result.z, scfg.coeff_threshold))

    rng = np.random.default_rng(seed)
    next_seed = lambda: int(rng.integers(0, 2**63 - 1))
    nodes: list[SubspaceNode] = []

    def new_node(level: int, indices: np.ndarray, divisible: bool) -> SubspaceNode:
        u, d = estimate_subspace(x.data[:, indices], hier_config.gamma)
        node = SubspaceNode(
            node_id=len(nodes),
            level=level,
            indices=np.sort(indices),
            basis=u,
            dim=d,
            divisible=divisible,
        )
        nodes.append(node)
        return node

    # Level 1: unconditional bisection of the whole sample set.
    root_sides = _bisect(np.arange(n), w, next_seed())
    if root_sides is None:
        new_node(1, np.arange(n), False)
        return HierarchyTree(nodes, p_max, n, result.converged, result.iterations)
    level_nodes = [new_node(1, idx, True) for idx in root_sides]

    # Level 2: unconditional bisection of each level-1 cluster.
    if p_max >= 2:
        next_level = []
        for node in level_nodes:
            sides = _bisect(node.indices, w, next_seed()) if node.size >= 2 else None
            if sides is None:
                node.divisible = False
                continue
            kids = [new_node(2, idx, True) for idx in sides]
            node.children = (kids[0].node_id, kids[1].node_id)
            next_level.extend(kids)
        level_nodes = next_level

    # Levels p >= 2: gain-tested splits.
    for _ in range(2, p_max):
        next_level = []
        for node in level_nodes:
            if not node.divisible or node.size < 2:
                node.divisible = False
                continue
            outcome = try_split(node, x, w, hier_config, next_seed())
            if outcome is None:
                continue
            kids = []
            for idx, u, d in outcome:
                child = SubspaceNode(
                    node_id=len(nodes),
                    level=node.level + 1,
                    indices=np.sort(idx),
                    basis=u,
                    dim=d,
                    divisible=True,
                )
                nodes.append(child)
                kids.append(child)
            node.children = (kids[0].node_id, kids[1].node_id)
            next_level.extend(kids)
        level_nodes = next_level

    return HierarchyTree(nodes, p_max, n, result.converged, result.iterations)


def tree_summary(tree: HierarchyTree) -> str:
    """One line per node: id, level, size, dim, divisibility, child ids."""
    lines = [
        f"levels={tree.max_level} samples={tree.n_samples} "
        f"leaves={len(tree.leaves())} solver_converged={int(tree.solver_converged)}"
    ]
    for n in tree.nodes:
        kids = ",".join(str(c) for c in n.children) if n.children else "-"
        lines.append(
            f"node={n.node_id} level={n.level} size={n.size} dim={n.dim} "
            f"divisible={int(n.divisible)} children={kids}"
        )
    return "\n".join(lines) + "\n"


def write_tree(tree: HierarchyTree, path) -> None:
    """Serialize the tree to the versioned little-endian binary format."""
    with open(path, "wb") as fh:
        fh.write(TREE_MAGIC)
        fh.write(
            struct.pack(
                "<IIIBI",
                TREE_VERSION,
                len(tree.nodes),
                tree.max_level,
                1 if tree.solver_converged else 0,
                tree.solver_iterations,
            )
        )
        fh.write(struct.pack("<I", tree.n_samples))
        for n in tree.nodes:
            fh.write(struct.pack("<IIB", n.node_id, n.level, 1 if n.divisible else 0))
            kids = n.children if n.children is not None else ()
            fh.write(struct.pack("<B", len(kids)))
            for c in kids:
                fh.write(struct.pack("<I", c))
            fh.write(struct.pack("<I", n.size))
            fh.write(np.ascontiguousarray(n.indices, dtype="<u4").tobytes())
            fh.write(struct.pack("<II", n.basis.shape[0], n.basis.shape[1]))
            fh.write(np.ascontiguousarray(n.basis, dtype="<f8").tobytes())


def read_tree(path) -> HierarchyTree:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TREE_MAGIC:
            raise DataError(f"bad tree magic {magic!r}")
        version, n_nodes, max_level, converged, iters = struct.unpack(
            "<IIIBI", fh.read(17)
        )
        if version != TREE_VERSION:
            raise DataError(f"unsupported tree version {version}")
        (n_samples,) = struct.unpack("<I", fh.read(4))
        nodes = []
        for _ in range(n_nodes):
            node_id, level, divisible = struct.unpack("<IIB", fh.read(9))
            (n_kids,) = struct.unpack("<B", fh.read(1))
            kids = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(n_kids))
            (size,) = struct.unpack("<I", fh.read(4))
            indices = np.frombuffer(fh.read(4 * size), dtype="<u4").astype(int)
            rows, cols = struct.unpack("<II", fh.read(8))
            basis = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(
                rows, cols
            )
            nodes.append(
                SubspaceNode(
                    node_id=node_id,
                    level=level,
                    indices=indices,
                    basis=basis.copy(),
                    dim=cols,
                    divisible=bool(divisible),
                    children=kids if n_kids else None,
                )
            )
    return HierarchyTree(nodes, max_level, n_samples, bool(converged), iters)
