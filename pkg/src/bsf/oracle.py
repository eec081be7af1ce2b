"""Ground-truth data generators, separation thresholds, and bound formulas.

The oracle is the unknown mechanism behind the data: fixed true labels plus
a component distribution per cluster.  Generators here produce (dataset,
true partition) pairs deterministically from a seed; Gaussian generation
draws standard noise first and adds means afterwards, so replicates with
the same seed share noise across different mean configurations (paired
comparisons across a separation grid).

Separation diagnostics follow the squared-distance form of the "nice set":
cross-cluster squared distances must clear a floor and within-cluster
squared distances must stay under a ceiling, with the floor and ceiling
computed exactly from the bandwidth, the prior/root product, the kernel
normalizer, and four positive constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import EUCLIDEAN, SPD, Dataset
from .kernels import KernelSpec, pairwise_sq_distances
from .partitions import Partition, canonicalize

NEG_INF = float("-inf")


@dataclass(frozen=True)
class SeparationConstants:
    """The four positive constants (c1, c2, iota1, iota2) parameterizing the
    separation set; defaults follow the (1, 1, 1, iota/2) convention with
    iota = 1.  None of them is pinned by theory beyond positivity."""

    c1: float = 1.0
    c2: float = 1.0
    iota1: float = 1.0
    iota2: float = 0.5

    def __post_init__(self):
        if min(self.c1, self.c2, self.iota1, self.iota2) <= 0:
            raise ValueError("separation constants must be positive")


DEFAULT_PHI = SeparationConstants()


@dataclass(frozen=True)
class GaussianOracleSpec:
    """True mixture of Gaussians: means, covariances, and cluster sizing.

    Exactly one of ``weights`` (categorical label draw) or ``counts``
    (fixed per-cluster sizes regardless of n) drives label generation;
    with neither, clusters are split as evenly as possible.
    """

    means: tuple
    covs: tuple
    weights: tuple | None = None
    counts: tuple | None = None

    def __post_init__(self):
        means = tuple(np.atleast_1d(np.asarray(m, dtype=float)) for m in self.means)
        covs = tuple(np.atleast_2d(np.asarray(c, dtype=float)) for c in self.covs)
        if len(means) != len(covs) or not means:
            raise ValueError("need one covariance per mean")
        p = means[0].shape[0]
        for m, c in zip(means, covs):
            if m.shape != (p,) or c.shape != (p, p):
                raise ValueError("inconsistent mean/covariance shapes")
            if np.linalg.eigvalsh(c).min() <= 0:
                raise ValueError("covariances must be positive definite")
        if self.weights is not None and self.counts is not None:
            raise ValueError("give weights or counts, not both")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @property
    def k_true(self) -> int:
        return len(self.means)

    @property
    def dim(self) -> int:
        return self.means[0].shape[0]

    @property
    def max_cov_eigenvalue(self) -> float:
        return max(float(np.linalg.eigvalsh(c).max()) for c in self.covs)

    @property
    def min_mean_separation(self) -> float:
        k = self.k_true
        if k < 2:
            raise ValueError("mean separation needs at least 2 clusters")
        return min(
            float(np.linalg.norm(self.means[a] - self.means[b]))
            for a in range(k)
            for b in range(a + 1, k)
        )

    @property
    def snr(self) -> float:
        return self.min_mean_separation / math.sqrt(self.max_cov_eigenvalue)


def scale_means_to_snr(spec: GaussianOracleSpec, snr: float) -> GaussianOracleSpec:
    """Rescale mean offsets about their centroid so the spec's signal-to-noise
    ratio becomes ``snr``; covariances and sizing are untouched."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    center = np.mean(np.stack(spec.means), axis=0)
    if snr == 0:
        factor = 0.0
    else:
        factor = snr / spec.snr
    means = tuple(center + factor * (m - center) for m in spec.means)
    return GaussianOracleSpec(means=means, covs=spec.covs,
                              weights=spec.weights, counts=spec.counts)


def _labels_for(spec_k: int, n: int, weights, counts, rng) -> np.ndarray:
    if counts is not None:
        if sum(counts) != n or len(counts) != spec_k:
            raise ValueError("counts must sum to n with one entry per cluster")
        return np.repeat(np.arange(spec_k), counts)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if len(w) != spec_k or w.min() < 0 or w.sum() <= 0:
            raise ValueError("bad label weights")
        return rng.choice(spec_k, size=n, p=w / w.sum())
    base, extra = divmod(n, spec_k)
    sizes = [base + (1 if k < extra else 0) for k in range(spec_k)]
    return np.repeat(np.arange(spec_k), sizes)


def generate_gaussian(spec: GaussianOracleSpec, n: int, seed) -> tuple[Dataset, Partition]:
    """Draw n points from the Gaussian oracle; returns data and true labels.

    Label order is deterministic for count-based sizing.  Noise is drawn as
    standard normals and colored per cluster, before means are added.
    """
    if n < spec.k_true and spec.counts is None and spec.weights is None:
        raise ValueError("n smaller than the number of clusters")
    rng = np.random.default_rng(seed)
    labels = _labels_for(spec.k_true, n, spec.weights, spec.counts, rng)
    noise = rng.standard_normal((n, spec.dim))
    chols = [np.linalg.cholesky(c) for c in spec.covs]
    pts = np.empty((n, spec.dim))
    for k in range(spec.k_true):
        sel = labels == k
        pts[sel] = spec.means[k] + noise[sel] @ chols[k].T
    data = Dataset(EUCLIDEAN, tuple(pts))
    return data, canonicalize(labels.tolist())


@dataclass(frozen=True)
class ObjectOracleSpec:
    """Object-valued oracle on the SPD manifold: one Frechet mean per
    cluster, symmetric Gaussian noise in the tangent space, and a
    configured (not estimated) tail exponent."""

    means: tuple
    noise_scales: tuple
    tail_exponent: float = 2.0
    counts: tuple | None = None

    def __post_init__(self):
        means = tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in self.means)
        if not means or len(self.noise_scales) != len(means):
            raise ValueError("need one noise scale per mean")
        for m in means:
            if m.shape[0] != m.shape[1] or np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError("means must be SPD")
        if min(self.noise_scales) < 0:
            raise ValueError("noise scales must be nonnegative")
        if self.tail_exponent <= 0:
            raise ValueError("tail exponent must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "noise_scales", tuple(float(s) for s in self.noise_scales))

    @property
    def k_true(self) -> int:
        return len(self.means)

    @property
    def dim(self) -> int:
        return self.means[0].shape[0]


def _expm_sym(mat: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(mat)
    return (u * np.exp(w)) @ u.T


def _logm_spd(mat: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(mat)
    return (u * np.log(np.maximum(w, 1e-300))) @ u.T


def generate_spd(spec: ObjectOracleSpec, n: int, seed) -> tuple[Dataset, Partition]:
    """Sample SPD points: exponentiate symmetric Gaussian tangent noise at
    each cluster's mean.  Zero noise reproduces the means exactly."""
    rng = np.random.default_rng(seed)
    labels = _labels_for(spec.k_true, n, None, spec.counts, rng)
    m = spec.dim
    sqrts = []
    for mean in spec.means:
        w, u = np.linalg.eigh(mean)
        sqrts.append((u * np.sqrt(w)) @ u.T)
    pts = []
    for lab in labels:
        raw = rng.standard_normal((m, m)) * spec.noise_scales[lab]
        sym = 0.5 * (raw + raw.T)
        root = sqrts[lab]
        pts.append(root @ _expm_sym(sym) @ root)
    data = Dataset(SPD, tuple(pts))
    return data, canonicalize(labels.tolist())


def frechet_mean_spd(points, iters: int = 50, tol: float = 1e-12) -> np.ndarray:
    """Karcher-flow mean of SPD matrices (fixed-point gradient descent)."""
    mats = [np.asarray(p, dtype=float) for p in points]
    mean = mats[0].copy()
    for _ in range(iters):
        w, u = np.linalg.eigh(mean)
        root = (u * np.sqrt(w)) @ u.T
        inv_root = (u / np.sqrt(w)) @ u.T
        tangent = np.zeros_like(mean)
        for mat in mats:
            tangent += _logm_spd(inv_root @ mat @ inv_root)
        tangent /= len(mats)
        mean = root @ _expm_sym(tangent) @ root
        if np.abs(tangent).max() < tol:
            break
    return mean


@dataclass(frozen=True)
class SeparationThresholds:
    """Squared-distance floor/ceiling for the separation check.

    ``cross_min_sq`` is None when there is a single true cluster (no cross
    pairs exist, so no floor applies).  A non-positive ``within_max_sq``
    marks the configuration as infeasible at this n; it is reported, not
    rejected, because the underlying conditions are asymptotic.
    """

    phi: SeparationConstants
    cross_min_sq: float | None
    within_max_sq: float
    log_rho: float  # log of 1 / (delta * lambda * zeta)

    @property
    def feasible(self) -> bool:
        return self.within_max_sq > 0


def compute_thresholds(sigma2: float, k_true: int, phi: SeparationConstants,
                       log_delta_lambda: float, log_zeta: float, n: int) -> SeparationThresholds:
    """Exact evaluation of the squared-distance floor and ceiling.

    floor   = 2 sigma^2 [ n log(K-1+iota1) - log(delta lambda) + log zeta - log c1 ]
    ceiling = 2 sigma^2 [ -n log(K+1+iota2) - log(delta lambda) + log zeta + log c2 ]
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if k_true < 1:
        raise ValueError("need at least one cluster")
    common = -log_delta_lambda + log_zeta
    if k_true == 1:
        cross = None
    else:
        cross = 2.0 * sigma2 * (
            n * math.log(k_true - 1 + phi.iota1) + common - math.log(phi.c1)
        )
    within = 2.0 * sigma2 * (
        -n * math.log(k_true + 1 + phi.iota2) + common + math.log(phi.c2)
    )
    return SeparationThresholds(
        phi=phi,
        cross_min_sq=cross,
        within_max_sq=within,
        log_rho=-(log_delta_lambda + log_zeta),
    )


@dataclass(frozen=True)
class SeparationStats:
    """Extreme pairwise quantities under the true clustering.

    Kernel extremes are carried in the log domain.  Empty pair sets take
    the neutral extremes (+inf cross distance, -inf within distance), so
    the membership conditions they feed are vacuously true.
    """

    log_max_cross_kernel: float
    log_min_within_kernel: float
    min_cross_sq: float
    max_within_sq: float

    @property
    def log_kernel_ratio(self) -> float:
        """log of (largest cross kernel / smallest within kernel)."""
        return self.log_max_cross_kernel - self.log_min_within_kernel


def separation_stats(data: Dataset, truth: Partition, kernel: KernelSpec) -> SeparationStats:
    if truth.n != data.n:
        raise ValueError("partition does not match the dataset")
    d2 = pairwise_sq_distances(data, kernel)
    labels = np.asarray(truth.labels)
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(data.n, 1)
    within = d2[iu][same[iu]]
    cross = d2[iu][~same[iu]]
    log_zeta = kernel.log_zeta(data.dim)
    two_s2 = 2.0 * kernel.sigma**2
    min_cross = float(cross.min()) if cross.size else float("inf")
    max_within = float(within.max()) if within.size else NEG_INF
    return SeparationStats(
        log_max_cross_kernel=(log_zeta - min_cross / two_s2) if cross.size else NEG_INF,
        log_min_within_kernel=(log_zeta - max_within / two_s2) if within.size else float("inf"),
        min_cross_sq=min_cross,
        max_within_sq=max_within,
    )


def check_D_membership(data: Dataset, truth: Partition, kernel: KernelSpec,
                       thresholds: SeparationThresholds) -> tuple[bool, SeparationStats]:
    """Boundary-inclusive membership in the separation set, plus the stats."""
    stats = separation_stats(data, truth, kernel)
    cross_ok = thresholds.cross_min_sq is None or stats.min_cross_sq >= thresholds.cross_min_sq
    within_ok = stats.max_within_sq <= thresholds.within_max_sq
    return bool(cross_ok and within_ok), stats


def misclassification_log_bound(stats: SeparationStats, k_true: int, n: int) -> float:
    """Log of the conditional misclassification-count bound:
    log(kernel ratio) + n log(K + 1)."""
    return stats.log_kernel_ratio + n * math.log(k_true + 1)


def misclassification_log_bound_gaussian(stats: SeparationStats, k_true: int,
                                         n: int, sigma2: float) -> float:
    """Same bound written through squared distances; identical to the
    generic form whenever the stats come from a Gaussian kernel."""
    return (
        -(stats.min_cross_sq - stats.max_within_sq) / (2.0 * sigma2)
        + n * math.log(k_true + 1)
    )


def corollary_schedule(spec: GaussianOracleSpec, n: int, alpha: float,
                       iota: float) -> tuple[float, float]:
    """Bandwidth and prior schedule driven by the oracle's signal-to-noise
    ratio; returns ``(sigma2, log_delta_lambda)`` with the prior product in
    the log domain (it underflows raw floats at modest n).

    sigma2          = [SNR / sqrt(p v log n)]^(2 alpha) * Lmax log(n) / [n log(K+1+iota)]
    log(delta lam)  = -n log(K+1+iota) - (p/2) log(sigma2)
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if iota <= 0:
        raise ValueError("iota must be positive")
    if spec.k_true < 2:
        raise ValueError("the schedule needs at least 2 clusters (SNR undefined otherwise)")
    if n < 2:
        raise ValueError("n must be at least 2")
    p = spec.dim
    lam_max = spec.max_cov_eigenvalue
    snr = spec.snr
    scale = (snr / math.sqrt(max(p, math.log(n)))) ** (2.0 * alpha)
    sigma2 = scale * lam_max * math.log(n) / (n * math.log(spec.k_true + 1 + iota))
    log_dl = -n * math.log(spec.k_true + 1 + iota) - 0.5 * p * math.log(sigma2)
    return sigma2, log_dl


def chi_square_tail_log_bound(a: float, p: float) -> float:
    """Log upper bound on P(X > a) for X ~ chi^2_p, valid for a > p:
    -(p/2) [a/p - 1 - log(a/p)]."""
    if not (p > 0 and a > p):
        raise ValueError("bound requires a > p > 0")
    ratio = a / p
    return -(p / 2.0) * (ratio - 1.0 - math.log(ratio))


def posterior_concentration_log_bound(stats: SeparationStats, k_true: int, n: int,
                                      log_delta_lambda: float) -> float:
    """Log surrogate bound on posterior odds against the true partition.

    Sums worst-case contributions from under-partitioned, miscounted, and
    over-partitioned alternatives, each priced by the extreme kernel ratios:
    at most ``K^n`` labeled partitions per block count K, each worth at most

    * ``(n eps / (delta lambda))^(K0-K)``   for K < K0,
    * ``n eps / gamma``                     for K = K0 (wrong partition),
    * ``(delta lambda / gamma)^(K-K0)``     for K > K0,

    all inflated by ``exp((K0-1) n eps/gamma) / K0!``.  The derivation
    needs ``n eps <= gamma``; +inf is returned otherwise (no finite-n
    guarantee).  Valid whenever the separation statistics come from the
    true clustering; checking the exact posterior odds against this value
    exercises the whole chain of determinant-ratio inequalities at once.
    """
    log_eps = stats.log_max_cross_kernel
    log_gamma = stats.log_min_within_kernel
    log_n_eps_over_gamma = math.log(n) + log_eps - log_gamma
    if log_n_eps_over_gamma > 0:
        return math.inf
    terms = []
    for k in range(1, k_true):
        terms.append(
            n * math.log(k)
            + (k_true - k) * (math.log(n) + log_eps - log_delta_lambda)
        )
    terms.append(n * math.log(k_true) + log_n_eps_over_gamma)
    for k in range(k_true + 1, n + 1):
        terms.append(n * math.log(k) + (k - k_true) * (log_delta_lambda - log_gamma))
    finite = [t for t in terms if t > NEG_INF]
    if not finite:
        return NEG_INF
    peak = max(finite)
    total = peak + math.log(sum(math.exp(t - peak) for t in finite))
    inflation = (k_true - 1) * math.exp(log_n_eps_over_gamma)
    return total + inflation - math.lgamma(k_true + 1)


def estimate_pair_tail_probs(spec: GaussianOracleSpec, thresholds: SeparationThresholds,
                             draws: int, seed) -> tuple[float, float]:
    """Monte Carlo estimates of the two pair-level tail probabilities:
    the worst chance a cross-cluster squared distance falls under the floor
    and the worst chance a within-cluster squared distance clears the
    ceiling.  The component distributions are arbitrary by design, so this
    is estimated rather than computed in closed form."""
    rng = np.random.default_rng(seed)
    chols = [np.linalg.cholesky(c) for c in spec.covs]

    def draw(k):
        return spec.means[k] + rng.standard_normal((draws, spec.dim)) @ chols[k].T

    worst_cross = 0.0
    if thresholds.cross_min_sq is not None:
        for a in range(spec.k_true):
            for b in range(a + 1, spec.k_true):
                d2 = np.sum((draw(a) - draw(b)) ** 2, axis=1)
                worst_cross = max(worst_cross, float((d2 < thresholds.cross_min_sq).mean()))
    worst_within = 0.0
    for k in range(spec.k_true):
        d2 = np.sum((draw(k) - draw(k)) ** 2, axis=1)
        worst_within = max(worst_within, float((d2 > thresholds.within_max_sq).mean()))
    return worst_cross, worst_within
