"""Simplex <-> sphere maps and von Mises-Fisher helpers.

Topics live in the vocabulary simplex.  Relative to an interior reference
point ``C`` every boundary topic ``beta`` has a unit direction
``(beta - C) / ||beta - C||`` on the sum-zero sphere, and every direction
with a negative coordinate has a unique boundary point along it.  All the
matching models work on those directions.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateTopic, NoNegativeCoordinate, NonInteriorReference, ZeroResultant

SIMPLEX_ATOL = 1e-9
UNIT_ATOL = 1e-9
DEGENERATE_NORM = 1e-12
ZERO_RESULTANT = 1e-12
# uniform smoothing applied to the reference before inverse_embed only
REFERENCE_EPS = 1e-10


@dataclass
class ReferencePoint:
    """Running mean of normalized documents.

    Attributes
    ----------
    mean : ndarray of shape (V,)
        Current mean, a point of the simplex.
    doc_count : int
        Number of documents absorbed so far.
    """

    mean: np.ndarray
    doc_count: int = 0

    @classmethod
    def uniform(cls, vocab_size):
        return cls(np.full(vocab_size, 1.0 / vocab_size), 0)

    @property
    def vocab_size(self):
        return self.mean.shape[0]

    def smoothed(self, eps=REFERENCE_EPS):
        """Mean mixed with ``eps`` of uniform mass so every coordinate is positive."""
        V = self.mean.shape[0]
        return (self.mean + eps) / (1.0 + V * eps)

    def copy(self):
        return ReferencePoint(self.mean.copy(), self.doc_count)


@dataclass(frozen=True)
class VmfParams:
    mean_direction: np.ndarray
    concentration: float = field(default=0.0)

    def __post_init__(self):
        if self.concentration < 0:
            raise ValueError("vMF concentration must be non-negative")


def is_simplex_point(x, atol=SIMPLEX_ATOL):
    x = np.asarray(x, dtype=float)
    return bool(np.all(x >= -atol) and abs(x.sum(axis=-1) - 1.0).max() <= atol)


def is_unit_direction(x, atol=UNIT_ATOL, sum_atol=1e-8):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    norms_ok = np.all(np.abs(np.linalg.norm(x, axis=1) - 1.0) <= atol)
    sums_ok = np.all(np.abs(x.sum(axis=1)) <= sum_atol)
    return bool(norms_ok and sums_ok)


def _ref_mean(ref):
    return ref.mean if isinstance(ref, ReferencePoint) else np.asarray(ref, dtype=float)


def embed(topic, ref):
    """Map simplex point(s) to unit direction(s) about the reference point.

    Parameters
    ----------
    topic : array-like of shape (V,) or (K, V)
    ref : ReferencePoint or array-like of shape (V,)

    Returns
    -------
    ndarray, same shape as ``topic``

    Raises
    ------
    DegenerateTopic
        If a topic coincides with the reference point.
    """
    topic = np.asarray(topic, dtype=float)
    diff = topic - _ref_mean(ref)
    norms = np.linalg.norm(diff, axis=-1, keepdims=True)
    if np.any(norms < DEGENERATE_NORM):
        raise DegenerateTopic("topic coincides with the reference point")
    return diff / norms


def inverse_embed(direction, ref, smooth=True):
    """Map unit direction(s) back to the simplex boundary.

    The boundary point along ``direction`` is ``eta * direction + c`` with
    ``eta = -1 / min_i(direction_i / c_i)``; the minimizing coordinate lands
    exactly on zero.

    Parameters
    ----------
    direction : array-like of shape (V,) or (K, V)
    ref : ReferencePoint or array-like of shape (V,)
    smooth : bool, default=True
        Mix a ``ReferencePoint`` with 1e-10 uniform mass first so that
        vocabulary entries never observed do not break the map.  Raw arrays
        are used as given.
    """
    if isinstance(ref, ReferencePoint):
        c = ref.smoothed() if smooth else ref.mean
    else:
        c = np.asarray(ref, dtype=float)
    if np.any(c <= 0):
        raise NonInteriorReference("reference point must have strictly positive coordinates")
    direction = np.asarray(direction, dtype=float)
    ratios = direction / c
    lowest = ratios.min(axis=-1, keepdims=True)
    if np.any(lowest >= 0):
        raise NoNegativeCoordinate("direction has no negative coordinate")
    out = c - direction / lowest
    # the argmin coordinate is zero analytically; remove rounding residue
    np.put_along_axis(out, np.argmin(ratios, axis=-1)[..., None], 0.0, axis=-1)
    return np.clip(out, 0.0, None)


def update_reference(ref, docs):
    """Absorb normalized documents into the running reference mean (in place).

    ``docs`` is an array of shape (n, V) whose rows are simplex points.  The
    update is the exact weighted mean, so feeding batches one at a time gives
    the same result as one pass over all of them.
    """
    docs = np.atleast_2d(np.asarray(docs, dtype=float))
    n = docs.shape[0]
    if n == 0:
        return ref
    total = ref.doc_count * ref.mean + docs.sum(axis=0)
    ref.doc_count += n
    ref.mean = total / ref.doc_count
    return ref


def vmf_log_kernel(params, x):
    """``tau * <mu, x>``; the normalizing constant is never needed."""
    return float(params.concentration * np.dot(params.mean_direction, x))


def vmf_map_combine(prev, prev_weight, obs, obs_weight):
    """MAP mean direction under a vMF prior and vMF observations.

    Returns the normalized ``prev_weight * prev + obs_weight * sum(obs)``.
    ``prev`` may be ``None`` for a topic with no history.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    total = obs_weight * obs.sum(axis=0) if obs.size else 0.0
    if prev is not None:
        total = total + prev_weight * np.asarray(prev, dtype=float)
    norm = np.linalg.norm(total)
    if norm < ZERO_RESULTANT:
        raise ZeroResultant("weighted directions cancel")
    return total / norm


def _wood_cosines(kappa, dim, n, rng):
    """Cosine to the mean for ``n`` vMF draws on the sphere in R^dim (Wood, 1994)."""
    if dim == 1:
        # S^0: two points; P(+mu) = e^k / (e^k + e^-k)
        p = 1.0 / (1.0 + np.exp(-2.0 * kappa))
        return np.where(rng.random(n) < p, 1.0, -1.0)
    m1 = dim - 1.0
    b = m1 / (np.sqrt(4.0 * kappa**2 + m1**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m1 * np.log1p(-x0 * x0)
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        z = rng.beta(m1 / 2.0, m1 / 2.0, size=need)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(need)
        ok = kappa * w + m1 * np.log1p(-x0 * w) - c >= np.log(u)
        got = w[ok]
        out[filled:filled + got.size] = got
        filled += got.size
    return out


def vmf_sample(params, rng, size=None, sum_zero=False):
    """Draw from a von Mises-Fisher distribution.

    Parameters
    ----------
    params : VmfParams
    rng : numpy.random.Generator
    size : int, optional
        Number of draws; ``None`` returns a single vector.
    sum_zero : bool, default=False
        Sample on the sphere of the sum-zero hyperplane (where embedded
        topics live) instead of the full ambient sphere.  ``mean_direction``
        must then itself be sum-zero.

    Returns
    -------
    ndarray of shape (V,) or (size, V)
    """
    mu = np.asarray(params.mean_direction, dtype=float)
    n = 1 if size is None else int(size)
    draws = vmf_sample_rows(np.broadcast_to(mu, (n, mu.shape[0])), params.concentration, rng, sum_zero)
    return draws[0] if size is None else draws


def vmf_sample_rows(means, concentration, rng, sum_zero=False):
    """One vMF draw around each row of ``means``, all with the same concentration."""
    mu = np.asarray(means, dtype=float)
    n, V = mu.shape
    dim = V - 1 if sum_zero else V
    w = _wood_cosines(float(concentration), dim, n, rng)

    noise = rng.standard_normal((n, V))
    if sum_zero:
        noise -= noise.mean(axis=1, keepdims=True)
    noise -= np.einsum("nv,nv->n", noise, mu)[:, None] * mu
    tnorm = np.linalg.norm(noise, axis=1, keepdims=True)
    # a one-dimensional sphere has no tangent direction (draws are +-mu)
    tangent = np.divide(noise, tnorm, out=np.zeros_like(noise), where=tnorm > 0)
    draws = w[:, None] * mu + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * tangent
    draws /= np.linalg.norm(draws, axis=1, keepdims=True)
    return draws


def uniform_directions(n, vocab_size, rng, sum_zero=True):
    """Uniform draws on the (sum-zero) unit sphere."""
    x = rng.standard_normal((n, vocab_size))
    if sum_zero:
        x -= x.mean(axis=1, keepdims=True)
    return x / np.linalg.norm(x, axis=1, keepdims=True)
