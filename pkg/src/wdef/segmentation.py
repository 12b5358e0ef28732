"""Support thresholding, mixture clustering and boundary extraction.

Pipeline for one spectrum: :func:`threshold_support` keeps bins within
``rel_db`` of the peak, :func:`gmm_cluster` separates the wavefronts of
different scatterers, and for each cluster :func:`extract_boundary_points`,
:func:`refine_boundary_points` and :func:`partition_boundaries` produce the
four boundary sample sets that the ellipse fits consume.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from .errors import EmptySpectrumError, InsufficientBoundaryError, InvalidInputError
from .spectrum import BOUNDARY_EDGES, PowerSpectrum, WavenumberGrid, amplitude_scale

log = logging.getLogger(__name__)

COV_FLOOR = 1e-8
CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class SupportMask:
    grid: WavenumberGrid
    mask: np.ndarray

    def points(self) -> np.ndarray:
        """(kx, ky) of every masked bin, in row-major bin order."""
        i, j = np.nonzero(self.mask)
        return np.column_stack([self.grid.kx[i], self.grid.ky[j]])


@dataclass
class MixtureFit:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float
    history: list[float] = field(default_factory=list)
    restart: int = 0

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def log_resp(self, points: np.ndarray) -> np.ndarray:
        return _log_resp(points, self.weights, self.means, self.covariances)[0]

    def predict(self, points: np.ndarray) -> np.ndarray:
        return np.argmax(self.log_resp(points), axis=1)


@dataclass
class ClusterModel:
    """Selected mixture plus a hard label per masked bin.

    ``label_map`` has the grid shape and holds -1 outside the mask.
    """

    s_count: int
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    labels: np.ndarray
    silhouette: float
    scores: dict[int, float]
    fits: dict[int, MixtureFit]
    label_map: np.ndarray | None = None

    @property
    def sigmas(self) -> np.ndarray:
        """Per-cluster (sigma_x, sigma_y): square roots of the covariance diagonals."""
        return np.sqrt(np.stack([self.covariances[:, 0, 0], self.covariances[:, 1, 1]], axis=1))


def threshold_support(spectrum: PowerSpectrum, rel_db: float = 15.0) -> SupportMask:
    """Keep bins whose power is at least max(power) * 10^(-rel_db / 10)."""
    if not rel_db > 0:
        raise InvalidInputError("rel_db must be positive (dB below peak)")
    peak = spectrum.power.max(initial=0.0)
    if peak <= 0:
        raise EmptySpectrumError("spectrum has no power")
    return SupportMask(spectrum.grid, spectrum.power >= peak * 10 ** (-rel_db / 10))


# -- Gaussian mixture -------------------------------------------------------

def _log_resp(x, weights, means, covs):
    """Log joint densities log(pi_k N(x | mu_k, S_k)) and per-point log-likelihood."""
    n, k = len(x), len(weights)
    logp = np.empty((n, k))
    for c in range(k):
        cov = covs[c]
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
        dx = x - means[c]
        maha = np.einsum("ni,ij,nj->n", dx, inv, dx)
        with np.errstate(divide="ignore"):
            logp[:, c] = np.log(weights[c]) - 0.5 * maha - np.log(2 * np.pi) - 0.5 * np.log(det)
    ll = logsumexp(logp, axis=1)
    return logp - ll[:, None], ll


def _floor_cov(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    w, v = np.linalg.eigh(cov)
    if w.min() >= COV_FLOOR:
        return cov, False
    w = np.maximum(w, COV_FLOOR)
    return (v * w) @ v.T, True


def kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator, w: np.ndarray | None = None) -> np.ndarray:
    """k-means++ seeding; sample weights scale the selection probabilities."""
    n = len(x)
    w = np.full(n, 1.0 / n) if w is None else w
    centers = [x[rng.choice(n, p=w / w.sum())]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        p = d2 * w
        if p.sum() <= 0:
            centers.append(x[rng.integers(n)])
        else:
            centers.append(x[rng.choice(n, p=p / p.sum())])
        d2 = np.minimum(d2, np.sum((x - centers[-1]) ** 2, axis=1))
    return np.array(centers)


def fit_gmm(points, n_components: int, weights=None, seed=0, restarts: int = 5,
            max_iter: int = 200, tol: float = 1e-7) -> MixtureFit:
    """EM fit of a full-covariance 2-D Gaussian mixture.

    With ``weights`` the objective is the weighted log-likelihood
    sum_i w_i log p(x_i) (weights normalised to sum to one); without them every
    point counts 1/n.  The best of ``restarts`` k-means++ initialisations is
    kept, ties going to the lowest restart index.  Collapsing covariances are
    floored at eigenvalue 1e-8 instead of failing.
    """
    x = np.asarray(points, dtype=float)
    n = len(x)
    if n < n_components:
        raise InvalidInputError("fewer points than mixture components")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float) / np.sum(weights)
    gmean = w @ x
    gcov, _ = _floor_cov(((x - gmean).T * w) @ (x - gmean))

    best = None
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = root.spawn(restarts)
    for r, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        means = kmeans_pp(x, n_components, rng, w)
        covs = np.repeat(gcov[None] / n_components, n_components, axis=0)
        pis = np.full(n_components, 1.0 / n_components)
        history = []
        regularized = False
        for _ in range(max_iter):
            log_r, ll_pts = _log_resp(x, pis, means, covs)
            ll = float(w @ ll_pts)
            if history and ll < history[-1] - 1e-9 and not regularized:
                raise RuntimeError(f"EM log-likelihood decreased: {history[-1]} -> {ll}")
            history.append(ll)
            if len(history) > 1 and ll - history[-2] < tol:
                break
            resp = np.exp(log_r) * w[:, None]
            nk = resp.sum(axis=0)
            regularized = False
            for c in range(n_components):
                if nk[c] <= 1e-12:
                    continue
                mu = resp[:, c] @ x / nk[c]
                dx = x - mu
                cov, floored = _floor_cov((dx.T * resp[:, c]) @ dx / nk[c])
                regularized |= floored
                means[c], covs[c] = mu, cov
            pis = np.maximum(nk, 1e-300)
            pis = pis / pis.sum()
        else:
            _, ll_pts = _log_resp(x, pis, means, covs)
            history.append(float(w @ ll_pts))
        fit = MixtureFit(pis, means, covs, history[-1], history, r)
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    return best


def silhouette_score(points, labels, weights=None) -> float:
    """Mean silhouette coefficient (optionally weighted).

    s(i) = (b - a) / max(a, b) with a the mean distance to the rest of the
    point's cluster and b the smallest mean distance to another cluster;
    singleton clusters score 0. Weights enter both the cluster means and the
    final average.
    """
    x = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=float)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise InvalidInputError("silhouette needs at least two clusters")
    d = np.sqrt(np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1))
    # weighted distance sums from every point to each cluster
    mean_to = np.empty((len(x), len(uniq)))
    for k, c in enumerate(uniq):
        members = labels == c
        mean_to[:, k] = d[:, members] @ w[members]
    s = np.zeros(len(x))
    for k, c in enumerate(uniq):
        members = labels == c
        own_w = w[members].sum() - w[members]
        ok = own_w > 0
        idx = np.flatnonzero(members)[ok]
        a = mean_to[idx, k] / own_w[ok]
        others = [m for m in range(len(uniq)) if m != k]
        b = np.min(np.stack([mean_to[idx, m] / w[labels == uniq[m]].sum() for m in others]), axis=0)
        s[idx] = (b - a) / np.maximum(np.maximum(a, b), 1e-300)
    return float(np.sum(w * s) / np.sum(w))


def gmm_cluster(points, weights=None, s_candidates=(1, 2, 3, 4), seed=0, restarts: int = 5,
                max_fit_points: int = 2000, max_silhouette_points: int = 1000,
                single_cluster_score: float = 0.62) -> ClusterModel:
    """Fit a mixture for each candidate count and keep the best silhouette.

    The silhouette is undefined for a single cluster; ``S = 1`` competes with
    the fixed score ``single_cluster_score``. Halving a single support, even
    an elongated one seen at grazing elevation, scores up to about 0.6, hence
    the 0.62 default. Large point sets are fitted on a seeded subsample and then
    labelled in full; the silhouette uses its own subsample.
    """
    x = np.asarray(points, dtype=float)
    s_candidates = sorted(set(int(s) for s in s_candidates))
    if not s_candidates or s_candidates[0] < 1:
        raise InvalidInputError("candidate counts must be positive")
    if len(x) < 2 * s_candidates[-1]:
        raise InvalidInputError(
            f"need at least {2 * s_candidates[-1]} points for up to {s_candidates[-1]} clusters")
    w = None if weights is None else np.asarray(weights, dtype=float)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    sub_seq, sil_seq, *fit_seqs = root.spawn(2 + len(s_candidates))

    fit_idx = _subsample(len(x), max_fit_points, np.random.default_rng(sub_seq))
    sil_idx = _subsample(len(x), max_silhouette_points, np.random.default_rng(sil_seq))
    scores, fits, label_sets = {}, {}, {}
    for s, ss in zip(s_candidates, fit_seqs):
        fit = fit_gmm(x[fit_idx], s, None if w is None else w[fit_idx], seed=ss, restarts=restarts)
        labels = fit.predict(x)
        fits[s], label_sets[s] = fit, labels
        if s == 1:
            scores[s] = single_cluster_score
        elif len(np.unique(labels[sil_idx])) < 2:
            scores[s] = -1.0
        else:
            scores[s] = silhouette_score(x[sil_idx], labels[sil_idx], None if w is None else w[sil_idx])
    best = max(s_candidates, key=lambda s: (scores[s], -s))
    fit = fits[best]
    return ClusterModel(best, fit.weights, fit.means, fit.covariances, label_sets[best],
                        scores[best], scores, fits)


def _subsample(n: int, limit: int, rng: np.random.Generator) -> np.ndarray:
    if n <= limit:
        return np.arange(n)
    return np.sort(rng.choice(n, size=limit, replace=False))


def cluster_support(mask: SupportMask, weights=None, **kwargs) -> ClusterModel:
    """Cluster the masked bins of a spectrum and attach the grid label map."""
    model = gmm_cluster(mask.points(), weights, **kwargs)
    label_map = np.full(mask.mask.shape, -1, dtype=int)
    label_map[mask.mask] = model.labels
    model.label_map = label_map
    return model


# -- boundaries ---------------------------------------------------------------

def extract_boundary_points(mask: SupportMask, cluster_label: int, labels: np.ndarray,
                            min_bins: int = 12) -> np.ndarray:
    """Bins of one cluster with a 4-neighbour outside it, as (kx, ky) rows.

    ``labels`` is the grid label map (-1 outside the mask). Bins on the grid
    border count as boundary bins.
    """
    region = mask.mask & (labels == cluster_label)
    if region.sum() < min_bins:
        raise InsufficientBoundaryError(
            f"cluster {cluster_label} has {int(region.sum())} bins, need {min_bins}")
    edge = region & ~ndimage.binary_erosion(region, structure=CROSS, border_value=0)
    i, j = np.nonzero(edge)
    return np.column_stack([mask.grid.kx[i], mask.grid.ky[j]])


def normalized_level(spectrum: PowerSpectrum) -> np.ndarray:
    """DFT magnitude divided by the closed-form interior profile of a unit-gain wavefront."""
    kx, ky = spectrum.grid.mesh()
    kz = np.sqrt(np.clip(1 - kx ** 2 - ky ** 2, 1e-6, None))
    return np.sqrt(spectrum.power) * kz / amplitude_scale(spectrum.geometry)


def estimate_gain(spectrum: PowerSpectrum, region: np.ndarray, exclude: np.ndarray | None = None,
                  dilation: int = 4, max_iter: int = 50) -> float:
    """|g| of the wavefront occupying ``region``.

    Inside its support a wavefront has normalised level |g| (see
    :func:`normalized_level`), but the edge blur is wide enough that no
    interior percentile is reliable. The blur preserves energy, so
    |g|^2 * area = energy, where the area counts bins at or above |g|/2 (the
    geometric edge) and the energy is summed over ``region`` dilated by
    ``dilation`` bins, skipping ``exclude`` (other clusters). Solved by
    fixed-point iteration.
    """
    level = normalized_level(spectrum)
    ext = ndimage.binary_dilation(region, structure=CROSS, iterations=dilation)
    if exclude is not None:
        ext &= ~exclude | region
    vals = level[ext]
    energy = float(np.sum(vals ** 2))
    g = float(np.median(level[region]))
    for _ in range(max_iter):
        area = int(np.count_nonzero(vals >= 0.5 * g))
        g_new = float(np.sqrt(energy / max(area, 1)))
        if abs(g_new - g) <= 1e-9 * g:
            return g_new
        g = g_new
    return g


def refine_boundary_points(spectrum: PowerSpectrum, points: np.ndarray, j: int, gain: float,
                           max_steps: int = 64) -> np.ndarray:
    """Move boundary samples of boundary ``j`` to the half-amplitude crossing.

    A power threshold relative to the peak lands well outside the geometric
    support edge, because the spectral edge is blurred over roughly
    sqrt(lambda / d) in wavenumber. The geometric edge is where the magnitude,
    normalised by the closed-form interior level |g| * scale / kz, falls to
    one half. Each sample walks along the governed axis to that crossing and
    is placed there by linear interpolation; samples without a crossing
    within ``max_steps`` bins are dropped.
    """
    if spectrum.geometry is None:
        raise InvalidInputError("refinement needs the spectrum geometry")
    grid = spectrum.grid
    axis, edge_sign = BOUNDARY_EDGES[j]
    inward = 1 if edge_sign > 0 else -1  # edge +L/2 gives the low-k side of the support
    level = normalized_level(spectrum) / gain
    axis_k = grid.kx if axis == "x" else grid.ky
    ii, jj = grid.index_of(points[:, 0], points[:, 1])

    out = []
    for i0, j0 in zip(ii, jj):
        prof = level[:, j0] if axis == "x" else level[i0, :]
        t = i0 if axis == "x" else j0
        n = len(prof)
        # step so that prof[t] >= 0.5 > prof[t - inward]
        steps = 0
        while prof[t] < 0.5 and steps < max_steps and 0 <= t + inward < n:
            t += inward
            steps += 1
        if prof[t] < 0.5:
            continue
        while 0 <= t - inward < n and prof[t - inward] >= 0.5 and steps < max_steps:
            t -= inward
            steps += 1
        o = t - inward
        if not 0 <= o < n or prof[o] >= 0.5:
            continue
        frac = (prof[t] - 0.5) / (prof[t] - prof[o])
        k_gov = axis_k[t] + frac * (axis_k[o] - axis_k[t])
        out.append((k_gov, grid.ky[j0]) if axis == "x" else (grid.kx[i0], k_gov))
    return np.array(out, dtype=float).reshape(-1, 2)


def partition_boundaries(edge_points, cluster_mean, corner_band=(0.8, 1.25), scale=None,
                         min_points: int = 6) -> dict[int, np.ndarray]:
    """Split boundary samples into the four sets B^1..B^4.

    Each sample goes to the axis with the dominant offset from the cluster
    mean: negative kx offset -> B^1, positive -> B^3, negative ky -> B^2,
    positive -> B^4. Samples whose offset ratio |dkx|/|dky| falls inside
    ``corner_band`` sit near a corner and are dropped. ``scale`` optionally
    divides the offsets by per-axis spreads so elongated supports split at
    their own corners.
    """
    pts = np.asarray(edge_points, dtype=float)
    if len(pts) < 4 * min_points:
        raise InsufficientBoundaryError(f"need at least {4 * min_points} edge points, got {len(pts)}")
    delta = pts - np.asarray(cluster_mean, dtype=float)
    if scale is not None:
        delta = delta / np.asarray(scale, dtype=float)
    ax, ay = np.abs(delta[:, 0]), np.abs(delta[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = ax / ay
    corner = (ratio >= corner_band[0]) & (ratio <= corner_band[1])
    xdom = ax > ay
    sets = {
        1: pts[~corner & xdom & (delta[:, 0] < 0)],
        3: pts[~corner & xdom & (delta[:, 0] > 0)],
        2: pts[~corner & ~xdom & (delta[:, 1] < 0)],
        4: pts[~corner & ~xdom & (delta[:, 1] > 0)],
    }
    short = [j for j, p in sets.items() if len(p) < min_points]
    if short:
        raise InsufficientBoundaryError(
            "boundary sets " + ", ".join(f"B{j}" for j in short) + f" have fewer than {min_points} points")
    return sets
