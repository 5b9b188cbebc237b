"""Held-out perplexity and recovery scores."""
import numpy as np
from scipy.optimize import linear_sum_assignment

DEFAULT_EM_ITERS = 50
DEFAULT_ALPHA = 0.1
TOPIC_SMOOTHING = 1e-6
MATCH_ANGLE = 0.2


def smooth_topics(topics, eps=TOPIC_SMOOTHING):
    topics = np.atleast_2d(np.asarray(topics, dtype=float)) + eps
    return topics / topics.sum(axis=1, keepdims=True)


def fold_in(topics, heldout, em_iters=DEFAULT_EM_ITERS, alpha=DEFAULT_ALPHA):
    """Per-document mixture weights with the topics held fixed.

    EM on the mixture weights of each document, with ``alpha`` added to
    every topic's expected count (a symmetric Dirichlet pseudo-count).
    Starts from, and with ``em_iters=0`` returns, uniform weights.

    Returns
    -------
    weights : ndarray of shape (n_docs, K)
    """
    B = np.atleast_2d(topics)
    K = B.shape[0]
    coo = heldout.counts.tocoo()
    rows, cols, n = coo.row, coo.col, coo.data.astype(float)
    lengths = heldout.doc_lengths.astype(float)
    W = np.full((heldout.n_docs, K), 1.0 / K)
    Bc = B[:, cols].T  # (nnz, K)
    for _ in range(em_iters):
        joint = W[rows] * Bc
        resp = joint * (n / joint.sum(axis=1))[:, None]
        expected = np.zeros_like(W)
        np.add.at(expected, rows, resp)
        W = (expected + alpha) / (lengths + K * alpha)[:, None]
    return W


def eval_perplexity(topics, heldout, em_iters=DEFAULT_EM_ITERS, alpha=DEFAULT_ALPHA,
                    eps=TOPIC_SMOOTHING):
    """``exp(-sum_d log p(doc_d) / sum_d N_d)`` under fold-in mixture weights.

    Topics are smoothed by ``eps`` and renormalized first, since boundary
    topics carry exact zeros.
    """
    B = smooth_topics(topics, eps)
    W = fold_in(B, heldout, em_iters, alpha)
    coo = heldout.counts.tocoo()
    p = np.einsum("nk,nk->n", W[coo.row], B[:, coo.col].T)
    loglik = float((coo.data * np.log(p)).sum())
    return float(np.exp(-loglik / heldout.doc_lengths.sum()))


def match_topics(inferred, true_dirs):
    """Hungarian matching on cosine similarity.

    Returns ``(true_index, inferred_index, angles)`` for matched pairs.
    """
    inferred = np.atleast_2d(np.asarray(inferred, dtype=float))
    true_dirs = np.atleast_2d(np.asarray(true_dirs, dtype=float))
    cos = np.clip(true_dirs @ inferred.T, -1.0, 1.0)
    r, c = linear_sum_assignment(cos, maximize=True)
    return r, c, np.arccos(cos[r, c])


def eval_matching_accuracy(inferred_thetas, truth, angle=MATCH_ANGLE):
    """Fraction of true topics matched to an inferred one within ``angle`` radians.

    ``truth`` is a :class:`~polytrack.synthetic.GroundTruth` (its ever-active
    topics are scored at their last active position) or an array of true
    directions.
    """
    true_dirs = truth.last_active_directions() if hasattr(truth, "last_active_directions") else truth
    true_dirs = np.atleast_2d(np.asarray(true_dirs, dtype=float))
    inferred = np.atleast_2d(np.asarray(inferred_thetas, dtype=float))
    if true_dirs.shape[0] == 0 or inferred.size == 0:
        raise ValueError("both topic sets must be nonempty")
    _, _, angles = match_topics(inferred, true_dirs)
    return float((angles < angle).sum() / true_dirs.shape[0])
