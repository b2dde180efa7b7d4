"""Model-based clustering of per-series dynamics.

Series are grouped by the distance between the infinite-order autoregressive
representations of their fitted dynamics (closed form for the ARMA(1,1) case)
and, separately, by the plain gap between their common-component loadings.
Agglomerative average-linkage trees are cut at the largest vertical gap
between merge heights.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.cluster.hierarchy as _sch
from scipy.spatial.distance import squareform

from .estimate import FitOptions, fit, fit_univariate_mem_sec
from .model import VMEM_SEC, ModelSpec, filter_paths


def arma11_distance(phi1, psi1, phi2, psi2):
    """Distance between two ARMA(1,1) processes via their AR(inf) weights.

    ``phi`` is the autoregressive and ``psi`` the moving-average parameter of
    each process (x_t = phi x_{t-1} + e_t - psi e_{t-1}); invertibility
    (|psi| < 1) is required.  The squared distance has the closed form
    (phi1-psi1)^2/(1-psi1^2) + (phi2-psi2)^2/(1-psi2^2)
    - 2 (phi1-psi1)(phi2-psi2)/(1-psi1 psi2).
    """
    if abs(psi1) >= 1.0 or abs(psi2) >= 1.0:
        raise ValueError(
            f"moving-average parameters must satisfy |psi| < 1; got {psi1!r}, {psi2!r}"
        )
    a1 = phi1 - psi1
    a2 = phi2 - psi2
    sq = (
        a1 * a1 / (1.0 - psi1 * psi1)
        + a2 * a2 / (1.0 - psi2 * psi2)
        - 2.0 * a1 * a2 / (1.0 - psi1 * psi2)
    )
    if sq < 0.0:
        if sq < -1e-12:
            raise ValueError(f"negative squared distance {sq!r}")
        sq = 0.0
    return math.sqrt(sq)


def arma_distance(alpha_i, beta_i, alpha_j, beta_j):
    """Distance between two fitted conditional-mean dynamics.

    Each series' mean recursion admits an ARMA(1,1) representation with
    autoregressive parameter alpha+beta and moving-average parameter beta,
    so the generic ARMA distance specializes to
    sqrt(a_i^2/(1-b_i^2) + a_j^2/(1-b_j^2) - 2 a_i a_j/(1-b_i b_j)).
    """
    return arma11_distance(alpha_i + beta_i, beta_i, alpha_j + beta_j, beta_j)


def theta_distance(theta_i, theta_j):
    """Absolute gap between two common-component loadings."""
    return abs(theta_i - theta_j)


def arma_distance_matrix(alphas, betas):
    """Symmetric matrix of pairwise dynamics distances."""
    alphas = np.asarray(alphas, float)
    betas = np.asarray(betas, float)
    n = alphas.size
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = arma_distance(alphas[i], betas[i], alphas[j], betas[j])
    return d


def theta_distance_matrix(thetas):
    thetas = np.asarray(thetas, float)
    return np.abs(thetas[:, None] - thetas[None, :])


@dataclass(frozen=True)
class Dendrogram:
    """Merge sequence of an agglomerative tree.

    ``merges`` has one row per merge: (left node, right node, height), with
    leaves numbered 0..n-1 and internal nodes n, n+1, ... in merge order.
    """

    merges: np.ndarray
    labels: tuple

    @property
    def heights(self):
        return self.merges[:, 2]


@dataclass(frozen=True)
class Partition:
    """Assignment of labels to contiguous group ids 1..k."""

    assignment: dict
    k: int

    def __post_init__(self):
        ids = sorted(set(self.assignment.values()))
        if ids != list(range(1, self.k + 1)):
            raise ValueError(f"group ids must be contiguous 1..{self.k}, got {ids}")

    def groups(self):
        out = {}
        for label, g in self.assignment.items():
            out.setdefault(g, []).append(label)
        return out


def _relabel_first_appearance(raw_ids, labels):
    """Map arbitrary cluster ids to 1..k in order of first appearance."""
    mapping = {}
    assignment = {}
    for lab, rid in zip(labels, raw_ids):
        if rid not in mapping:
            mapping[rid] = len(mapping) + 1
        assignment[lab] = mapping[rid]
    return Partition(assignment=assignment, k=len(mapping))


def _auto_k(heights):
    """Pick the cluster count with the largest gap between merge heights.

    Cutting to k clusters undoes the last k-1 merges; its gap is the height
    difference across that cut.  k = 1 (no cut) carries a zero gap, so it
    wins only when every merge happens at the same height; ties always go to
    the smaller k.  The trivial cut at k = n is not a candidate.
    """
    n = heights.size + 1
    best_k, best_gap = 1, 0.0
    for k in range(2, n):
        gap = heights[n - k] - heights[n - k - 1]
        if gap > best_gap:
            best_k, best_gap = k, gap
    return best_k


def hierarchical_cluster(distance_matrix, labels=None, k=None):
    """Average-linkage agglomerative clustering of a distance matrix.

    Parameters
    ----------
    distance_matrix : ndarray
        Symmetric, non-negative, zero diagonal.
    labels : sequence, optional
        Leaf labels; defaults to stringified indices.
    k : int, optional
        Fixed cluster count; when omitted the count is selected by the
        largest height gap (ties toward fewer clusters).

    Returns
    -------
    (Dendrogram, Partition)
    """
    d = np.asarray(distance_matrix, dtype=float)
    n = d.shape[0]
    if d.ndim != 2 or d.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if n < 2:
        raise ValueError("need at least 2 items to cluster")
    if np.any(d < 0.0) or np.any(np.diag(d) != 0.0) or not np.allclose(d, d.T):
        raise ValueError("distance matrix must be symmetric, non-negative, zero-diagonal")
    if labels is None:
        labels = [str(i) for i in range(n)]
    labels = list(labels)
    if len(labels) != n:
        raise ValueError("labels must match the matrix size")

    Z = _sch.linkage(squareform(d, checks=False), method="average")
    dendrogram = Dendrogram(merges=Z[:, :3].copy(), labels=tuple(labels))
    if k is None:
        k = _auto_k(Z[:, 2])
    if not 1 <= k <= n:
        raise ValueError(f"cluster count {k} outside 1..{n}")
    raw = _sch.cut_tree(Z, n_clusters=k).ravel()
    return dendrogram, _relabel_first_appearance(raw, labels)


def adjusted_rand_index(p1, p2):
    """Chance-corrected agreement between two partitions of the same labels.

    Equals 1 exactly when the partitions coincide up to relabeling; can be
    negative when agreement is worse than random.
    """
    if set(p1.assignment) != set(p2.assignment):
        raise ValueError("partitions must cover the same labels")
    labels = sorted(p1.assignment, key=str)
    n = len(labels)
    table = np.zeros((p1.k, p2.k), dtype=np.int64)
    for lab in labels:
        table[p1.assignment[lab] - 1, p2.assignment[lab] - 1] += 1

    def comb2(a):
        return a * (a - 1) // 2

    sum_cells = sum(comb2(int(v)) for v in table.ravel())
    sum_rows = sum(comb2(int(v)) for v in table.sum(axis=1))
    sum_cols = sum(comb2(int(v)) for v in table.sum(axis=0))
    total = comb2(n)
    # exact rational arithmetic: all inputs are pair counts
    expected = Fraction(sum_rows * sum_cols, total) if total else Fraction(0)
    maximum = Fraction(sum_rows + sum_cols, 2)
    if maximum == expected:
        same = {frozenset(g) for g in p1.groups().values()} == {
            frozenset(g) for g in p2.groups().values()
        }
        return 1.0 if same else 0.0
    return float((sum_cells - expected) / (maximum - expected))


@dataclass(frozen=True)
class ClusteringResult:
    """Clustered model spec together with the intermediate diagnostics."""

    model_spec: ModelSpec
    ab_partition: Partition
    ab_dendrogram: Dendrogram
    theta_partition: Partition = None
    theta_dendrogram: Dendrogram = None
    alphas: np.ndarray = None
    betas: np.ndarray = None
    thetas: np.ndarray = None
    scalar_fit: object = None


def clustering_pipeline(panel, factor=None, options=None, variant=VMEM_SEC,
                        k1=None, k2=None):
    """Reduce a panel to a clustered parameterization.

    For the common-component variant: (1) fit the scalar model, (2) extract
    the preliminary common path, (3) fit one univariate regression per series
    against it, (4) cluster the per-series (alpha, beta) pairs by the ARMA
    distance, (5) cluster the loadings by their absolute gaps.  For the plain
    variant only steps 3-5 run, with no common regressor.

    Parameters
    ----------
    panel : VolatilityPanel
    factor : PcFactor, optional
        Required for the common-component variant.
    options : FitOptions, optional
    variant : str
        ``"vmem-sec"`` or ``"vmem"``.
    k1, k2 : int, optional
        Fixed cluster counts; automatic gap selection when omitted.

    Returns
    -------
    ClusteringResult
        ``model_spec`` holds the clustered spec with both assignment maps.
    """
    if panel.n_series < 3:
        raise ValueError("clustering needs at least 3 series")
    options = options or FitOptions()
    train = panel.training_view()
    tickers = list(train.tickers)

    scalar_fit = None
    xi_star = None
    if variant == VMEM_SEC:
        scalar_spec = ModelSpec.for_tickers(VMEM_SEC, "scalar", tickers)
        scalar_options = dataclasses.replace(options, compute_std_errors=False)
        scalar_fit = fit(panel, factor, scalar_spec, scalar_options)
        xi_star = filter_paths(train, scalar_spec, scalar_fit.params).xi

    alphas = np.empty(len(tickers))
    betas = np.empty(len(tickers))
    thetas = np.empty(len(tickers))
    for i in range(len(tickers)):
        uni = fit_univariate_mem_sec(
            train.x[:, i], xi_star, options, compute_std_errors=False
        )
        alphas[i], betas[i], thetas[i] = uni.alpha, uni.beta, uni.theta

    ab_dendro, ab_part = hierarchical_cluster(
        arma_distance_matrix(alphas, betas), labels=tickers, k=k1
    )
    if variant == VMEM_SEC:
        th_dendro, th_part = hierarchical_cluster(
            theta_distance_matrix(thetas), labels=tickers, k=k2
        )
        spec = ModelSpec.for_tickers(
            VMEM_SEC, "clustered", tickers,
            ab_groups=ab_part.assignment, theta_groups=th_part.assignment,
        )
        return ClusteringResult(
            model_spec=spec, ab_partition=ab_part, ab_dendrogram=ab_dendro,
            theta_partition=th_part, theta_dendrogram=th_dendro,
            alphas=alphas, betas=betas, thetas=thetas, scalar_fit=scalar_fit,
        )
    spec = ModelSpec.for_tickers("vmem", "clustered", tickers,
                                 ab_groups=ab_part.assignment)
    return ClusteringResult(
        model_spec=spec, ab_partition=ab_part, ab_dendrogram=ab_dendro,
        alphas=alphas, betas=betas, thetas=None, scalar_fit=None,
    )
