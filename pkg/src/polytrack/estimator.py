"""Per-batch static topic estimation and topic-file loading.

The matching models only need noisy topic directions per batch; any static
topic model can supply them.  The built-in baseline clusters document
directions with spherical k-means++ and maps each cluster's mean direction
to the simplex boundary.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ParseError, TooFewDocs, ZeroRow
from .geometry import ReferencePoint, embed, inverse_embed, update_reference


@dataclass
class DocBatch:
    """Bag-of-words documents as a sparse (n_docs, V) count matrix."""

    counts: sp.csr_matrix
    labels: list = field(default=None)

    def __post_init__(self):
        self.counts = sp.csr_matrix(self.counts, dtype=np.int64)
        if self.counts.nnz and self.counts.data.min() < 0:
            raise ValueError("word counts must be non-negative")
        self.counts.eliminate_zeros()
        if self.n_docs and (np.asarray(self.counts.sum(axis=1)).ravel() < 1).any():
            raise ValueError("every document needs at least one word")

    @classmethod
    def empty(cls, vocab_size):
        return cls(sp.csr_matrix((0, vocab_size), dtype=np.int64))

    @property
    def n_docs(self):
        return self.counts.shape[0]

    @property
    def vocab_size(self):
        return self.counts.shape[1]

    @property
    def doc_lengths(self):
        return np.asarray(self.counts.sum(axis=1)).ravel()

    def normalized(self):
        """Dense (n_docs, V) array of documents divided by their length."""
        if self.n_docs == 0:
            return np.zeros((0, self.vocab_size))
        X = self.counts.toarray().astype(float)
        return X / X.sum(axis=1, keepdims=True)

    @staticmethod
    def concat(batches):
        batches = list(batches)
        return DocBatch(sp.vstack([b.counts for b in batches], format="csr"))


@dataclass
class TopicEstimate:
    topics: np.ndarray
    source: str = "baseline"


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs of the baseline estimator.

    The number of clusters grows from ``k_min`` while one more cluster still
    lowers the within-cluster dispersion by more than ``threshold``
    (relative).  Along that path the chosen k is the elbow: the one whose
    relative drop is largest compared with the drop of the step after it.
    k never exceeds ``k_max``, ``max_topics`` or the number of distinct
    documents.
    """

    k_min: int = 2
    k_max: int = 30
    threshold: float = 0.05
    max_topics: int = 500
    n_init: int = 3
    max_iter: int = 100
    seed: int = 0


# next-step drops below this fraction of the threshold count as this much
# when locating the elbow, so k-means noise near zero cannot dominate
DROP_FLOOR = 0.2


def _relative_drop(before, after):
    return (before - after) / before if before > 0 else 0.0


def _kmeanspp_init(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    dist = 1.0 - X @ centers[0]
    for _ in range(1, k):
        d = np.clip(dist, 0.0, None) ** 2
        total = d.sum()
        idx = rng.choice(n, p=d / total) if total > 0 else rng.integers(n)
        centers.append(X[idx])
        dist = np.minimum(dist, 1.0 - X @ X[idx])
    return np.array(centers)


def spherical_kmeans(X, k, rng, n_init=3, max_iter=100):
    """Cosine k-means on unit rows of ``X`` with k-means++ seeding.

    Returns ``(centers, labels, dispersion)`` for the best of ``n_init`` runs,
    where dispersion is ``sum_n (1 - <x_n, center(x_n)>)``.
    """
    best = None
    for _ in range(n_init):
        centers = _kmeanspp_init(X, k, rng)
        labels = None
        for _ in range(max_iter):
            sims = X @ centers.T
            new_labels = sims.argmax(axis=1)
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            sums = np.zeros_like(centers)
            np.add.at(sums, labels, X)
            norms = np.linalg.norm(sums, axis=1)
            empty = norms < 1e-12
            if empty.any():
                # reseed empty clusters at the worst-fit points
                worst = np.argsort(sims[np.arange(len(X)), labels])[: int(empty.sum())]
                sums[empty] = X[worst]
                norms[empty] = 1.0
            centers = sums / norms[:, None]
        sims = X @ centers.T
        labels = sims.argmax(axis=1)
        dispersion = float((1.0 - sims[np.arange(len(X)), labels]).sum())
        if best is None or dispersion < best[2]:
            best = (centers, labels, dispersion)
    return best


class SphericalKMeansTopics(BaseEstimator):
    """Baseline topic estimator on bag-of-words counts.

    Parameters
    ----------
    k_min, k_max : int
        Range searched for the number of topics.
    threshold : float
        Minimum relative dispersion drop for accepting one more cluster.
    n_init, max_iter : int
    random_state : int

    Attributes
    ----------
    topics_ : ndarray of shape (n_topics, V)
        Boundary simplex points.
    directions_ : ndarray of shape (n_topics, V)
        Cluster mean directions about the reference point.
    dispersions_ : dict
        Within-cluster dispersion for every k evaluated.
    """

    def __init__(self, k_min=2, k_max=30, threshold=0.05, n_init=3, max_iter=100, random_state=0):
        self.k_min = k_min
        self.k_max = k_max
        self.threshold = threshold
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None, reference=None):
        """Fit on a (n_docs, V) count matrix; ``reference`` defaults to the batch mean."""
        counts = DocBatch(X).counts if not isinstance(X, DocBatch) else X.counts
        batch = DocBatch(counts)
        if batch.n_docs < 2:
            raise TooFewDocs(f"need at least 2 documents, got {batch.n_docs}")
        docs = batch.normalized()
        if reference is None:
            reference = update_reference(ReferencePoint.uniform(batch.vocab_size), docs)
        diff = docs - reference.mean
        norms = np.linalg.norm(diff, axis=1)
        usable = norms >= 1e-12
        if usable.sum() < 2:
            raise TooFewDocs("fewer than 2 documents differ from the reference point")
        D = diff[usable] / norms[usable, None]
        # identical documents are one point as far as clustering is concerned
        n_distinct = np.unique(np.round(D, 12), axis=0).shape[0]
        if n_distinct < 2:
            raise TooFewDocs("all usable documents are identical")

        rng = np.random.default_rng(self.random_state)
        k_hi = int(min(self.k_max, n_distinct))
        k_lo = int(min(max(self.k_min, 1), k_hi))
        # grow while one more cluster still removes more than `threshold` of
        # the remaining dispersion, then put the elbow where that relative
        # drop falls most sharply
        fits = {kk: spherical_kmeans(D, kk, rng, self.n_init, self.max_iter)
                for kk in range(max(k_lo - 1, 1), k_lo + 1)}
        drops = {}
        k = k_lo
        while k < k_hi:
            fits[k + 1] = spherical_kmeans(D, k + 1, rng, self.n_init, self.max_iter)
            drops[k + 1] = _relative_drop(fits[k][2], fits[k + 1][2])
            if drops[k + 1] <= self.threshold:
                break
            k += 1
        if k_lo - 1 in fits:
            drops[k_lo] = _relative_drop(fits[k_lo - 1][2], fits[k_lo][2])
        floor = self.threshold * DROP_FLOOR
        candidates = [kk for kk in range(k_lo, k + 1) if kk == k_lo or drops[kk] > self.threshold]
        k = max(candidates, key=lambda kk: (drops.get(kk, 0.0) / max(drops.get(kk + 1, self.threshold), floor), -kk))

        centers = fits[k][0]
        self.n_topics_ = k
        self.directions_ = centers
        self.topics_ = inverse_embed(centers, reference)
        self.labels_ = fits[k][1]
        self.dispersions_ = {kk: f[2] for kk, f in fits.items()}
        self.reference_ = reference
        return self

    def transform(self, X):
        """Cosine similarity of each document's direction to each topic direction."""
        check_is_fitted(self, "directions_")
        docs = DocBatch(X).normalized() if not isinstance(X, DocBatch) else X.normalized()
        diff = docs - self.reference_.mean
        norms = np.linalg.norm(diff, axis=1, keepdims=True)
        D = np.divide(diff, norms, out=np.zeros_like(diff), where=norms > 0)
        return D @ self.directions_.T


def estimate_topics(batch, ref, config=None):
    """Baseline topics of one batch, as boundary simplex points.

    Parameters
    ----------
    batch : DocBatch
    ref : ReferencePoint
        Reference for embedding documents and mapping topics back.
    config : EstimatorConfig, optional
    """
    config = config or EstimatorConfig()
    model = SphericalKMeansTopics(
        k_min=config.k_min, k_max=min(config.k_max, config.max_topics), threshold=config.threshold,
        n_init=config.n_init, max_iter=config.max_iter, random_state=config.seed,
    )
    model.fit(batch, reference=ref)
    return TopicEstimate(model.topics_, "baseline")


def estimate_directions(batch, ref, config=None):
    """Estimated topics embedded about ``ref`` (what the matching models consume)."""
    return embed(estimate_topics(batch, ref, config).topics, ref)


def load_topics(path, vocab_size=None):
    """Read a CSV of topics, one row of V non-negative weights per topic.

    Rows are L1-normalized.  Raises ``ParseError`` (with row/column) on bad
    numbers or widths and ``ZeroRow`` on rows without mass.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if vocab_size is not None and len(row) != vocab_size:
                raise ParseError(f"expected {vocab_size} columns, got {len(row)}", line=lineno)
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    x = float(cell)
                except ValueError:
                    raise ParseError(f"not a number: {cell!r}", line=lineno, column=col) from None
                if not np.isfinite(x) or x < 0:
                    raise ParseError(f"weights must be finite and non-negative: {cell!r}",
                                     line=lineno, column=col)
                values.append(x)
            if vocab_size is None:
                vocab_size = len(values)
            elif len(values) != vocab_size:
                raise ParseError(f"expected {vocab_size} columns, got {len(values)}", line=lineno)
            total = sum(values)
            if total <= 0:
                raise ZeroRow("topic row has zero mass", line=lineno)
            rows.append(np.array(values) / total)
    if not rows:
        raise ParseError("no topics in file", line=1)
    return TopicEstimate(np.vstack(rows), "loaded")


def save_topics(path, topics):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in np.atleast_2d(topics):
            writer.writerow([format(float(x), ".17g") for x in row])
