"""Forward samplers for the generative models, used to build test data.

Global topics get stick-breaking Beta-process weights; trajectories follow
vMF dynamics on the sum-zero sphere; topics active at a timestep (or in a
group) emit vMF-noisy estimates.  ``sample_documents`` turns simplex topics
into LDA-style bags of words.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .estimator import DocBatch
from .geometry import ReferencePoint, embed, inverse_embed, uniform_directions, vmf_sample_rows

logger = logging.getLogger(__name__)


def default_truncation(gamma0):
    return int(max(50, np.ceil(20 * gamma0)))


def stick_breaking_weights(gamma0, truncation, rng):
    """``q_i = prod_{l <= i} mu_l`` with ``mu_l ~ Beta(gamma0, 1)``."""
    if truncation < 20 * gamma0:
        raise ValueError(f"truncation {truncation} < 20 * gamma0; tail mass would be too large")
    mu = rng.beta(gamma0, 1.0, size=truncation)
    q = np.cumprod(mu)
    # expected leftover mass: sum_{i > n} (g / (g + 1))^i
    r = gamma0 / (gamma0 + 1.0)
    logger.debug("stick truncated at %d atoms, expected tail mass %.3g",
                 truncation, r ** (truncation + 1) * (gamma0 + 1.0))
    return q


@dataclass
class Observation:
    """Noisy estimates with the index of the global topic behind each one."""

    directions: np.ndarray
    labels: np.ndarray


@dataclass
class GroundTruth:
    """Everything a sampler drew.

    Attributes
    ----------
    weights : ndarray of shape (I,)
        Global topic weights q_i.
    trajectories : ndarray of shape (I, T + 1, V)
        Positions at t = 0..T (static samplers store T = 0 and repeat it).
    activity : ndarray of bool
        Shape (T, I) for the dynamic sampler, (J, I) for the grouped one and
        (T, J, I) for the hierarchical one.
    observations : dict
        Keyed by ``t`` (1-based), ``j`` or ``(t, j)``.
    group_weights : ndarray of shape (J, I) or None
    """

    weights: np.ndarray
    trajectories: np.ndarray
    activity: np.ndarray
    observations: dict
    hyper: dict
    group_weights: np.ndarray | None = None
    kind: str = "dynamic"
    extras: dict = field(default_factory=dict)

    def ever_active(self):
        """Indices of topics active at least once."""
        act = self.activity.reshape(-1, self.activity.shape[-1])
        return np.flatnonzero(act.any(axis=0))

    def last_active_directions(self):
        """For each ever-active topic, its position at the last time it was active."""
        act = self.activity if self.activity.ndim == 2 else self.activity.any(axis=1)
        if self.kind == "grouped":
            return self.trajectories[self.ever_active(), 0]
        out = []
        for i in self.ever_active():
            t_last = int(np.flatnonzero(act[:, i])[-1]) + 1
            out.append(self.trajectories[i, t_last])
        return np.array(out)

    def save(self, directory):
        """Write ``manifest.json`` plus CSV matrices under ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        fmt = "%.17g"
        np.savetxt(d / "weights.csv", self.weights[None, :], delimiter=",", fmt=fmt)
        I, T1, V = self.trajectories.shape
        np.savetxt(d / "trajectories.csv", self.trajectories.reshape(I * T1, V), delimiter=",", fmt=fmt)
        np.savetxt(d / "activity.csv", self.activity.reshape(-1, self.activity.shape[-1]).astype(int),
                   delimiter=",", fmt="%d")
        if self.group_weights is not None:
            np.savetxt(d / "group_weights.csv", self.group_weights, delimiter=",", fmt=fmt)
        obs_index = []
        for n, (key, ob) in enumerate(sorted(self.observations.items(), key=lambda kv: str(kv[0]))):
            name = f"obs_{n:04d}.csv"
            if ob.directions.size:
                np.savetxt(d / name, ob.directions, delimiter=",", fmt=fmt)
            else:
                (d / name).write_text("")
            obs_index.append({"key": list(key) if isinstance(key, tuple) else key,
                              "file": name, "labels": ob.labels.tolist()})
        manifest = {
            "kind": self.kind,
            "hyper": self.hyper,
            "n_topics": I,
            "n_times": T1,
            "vocab_size": V,
            "activity_shape": list(self.activity.shape),
            "observations": obs_index,
            "extras": self.extras,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        I, T1, V = manifest["n_topics"], manifest["n_times"], manifest["vocab_size"]
        weights = np.loadtxt(d / "weights.csv", delimiter=",", ndmin=1)
        traj = np.loadtxt(d / "trajectories.csv", delimiter=",", ndmin=2).reshape(I, T1, V)
        activity = np.loadtxt(d / "activity.csv", delimiter=",", ndmin=2).astype(bool)
        activity = activity.reshape(manifest["activity_shape"])
        gw = d / "group_weights.csv"
        group_weights = np.loadtxt(gw, delimiter=",", ndmin=2) if gw.exists() else None
        observations = {}
        for entry in manifest["observations"]:
            key = tuple(entry["key"]) if isinstance(entry["key"], list) else entry["key"]
            text = (d / entry["file"]).read_text().strip()
            dirs = np.loadtxt(d / entry["file"], delimiter=",", ndmin=2) if text else np.zeros((0, V))
            observations[key] = Observation(dirs, np.array(entry["labels"], dtype=int))
        return cls(weights, traj, activity, observations, manifest["hyper"], group_weights,
                   manifest["kind"], manifest.get("extras", {}))


def _trajectories(n_topics, V, T, tau0, rng, initial=None):
    traj = np.empty((n_topics, T + 1, V))
    traj[:, 0] = uniform_directions(n_topics, V, rng) if initial is None else initial
    for t in range(1, T + 1):
        traj[:, t] = vmf_sample_rows(traj[:, t - 1], tau0, rng, sum_zero=True)
    return traj


def _observe(traj_t, active, tau1, rng):
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return Observation(np.zeros((0, traj_t.shape[1])), idx)
    return Observation(vmf_sample_rows(traj_t[idx], tau1, rng, sum_zero=True), idx)


def _hyper_dict(hyper):
    return {"tau0": hyper.tau0, "tau1": hyper.tau1, "gamma0": hyper.gamma0}


def sample_dynamic(hyper, V, T, truncation=None, rng=None, weights=None, initial=None):
    """Single evolving polytope.

    ``weights`` overrides the stick-breaking draw (test hook) and
    ``initial`` the uniform starting directions.
    """
    rng = np.random.default_rng(rng)
    if weights is None:
        q = stick_breaking_weights(hyper.gamma0, truncation or default_truncation(hyper.gamma0), rng)
    else:
        q = np.asarray(weights, dtype=float)
    I = q.size
    traj = _trajectories(I, V, T, hyper.tau0, rng, initial)
    activity = rng.random((T, I)) < q
    obs = {t: _observe(traj[:, t], activity[t - 1], hyper.tau1, rng) for t in range(1, T + 1)}
    return GroundTruth(q, traj, activity, obs, _hyper_dict(hyper), kind="dynamic")


def sample_grouped(hyper, V, J, rng=None, truncation=None, weights=None, initial=None):
    """Static polytopes of J groups drawing on shared global topics."""
    rng = np.random.default_rng(rng)
    if weights is None:
        q = stick_breaking_weights(hyper.gamma0, truncation or default_truncation(hyper.gamma0), rng)
    else:
        q = np.asarray(weights, dtype=float)
    I = q.size
    thetas = uniform_directions(I, V, rng) if initial is None else np.asarray(initial, dtype=float)
    activity = rng.random((J, I)) < q
    obs = {j: _observe(thetas, activity[j], hyper.tau1, rng) for j in range(J)}
    return GroundTruth(q, thetas[:, None, :], activity, obs, _hyper_dict(hyper), kind="grouped")


def sample_hierarchical(hyper, V, J, T, rng=None, truncation=None, weights=None,
                        group_weights=None, group_concentration=None, initial=None):
    """Groups with their own topic weights around the global ones, over time.

    Group weights are drawn as ``Beta(c q_i, c (1 - q_i))`` with ``c`` the
    group concentration (gamma0 by default), which keeps ``E[p_ji] = q_i``.
    ``group_weights`` overrides the draw (test hook).
    """
    rng = np.random.default_rng(rng)
    if weights is None:
        q = stick_breaking_weights(hyper.gamma0, truncation or default_truncation(hyper.gamma0), rng)
    else:
        q = np.asarray(weights, dtype=float)
    I = q.size
    if group_weights is None:
        c = np.broadcast_to(hyper.gamma0 if group_concentration is None else group_concentration, (J,))
        qq = np.clip(q, 1e-12, 1 - 1e-12)
        p = np.vstack([rng.beta(c[j] * qq, c[j] * (1.0 - qq)) for j in range(J)])
    else:
        p = np.asarray(group_weights, dtype=float).reshape(J, I)
    traj = _trajectories(I, V, T, hyper.tau0, rng, initial)
    activity = rng.random((T, J, I)) < p[None, :, :]
    obs = {(t, j): _observe(traj[:, t], activity[t - 1, j], hyper.tau1, rng)
           for t in range(1, T + 1) for j in range(J)}
    return GroundTruth(q, traj, activity, obs, _hyper_dict(hyper), p, kind="hierarchical")


def sample_documents(topics, n_docs, doc_len, dirichlet_alpha, rng=None):
    """LDA-style documents: Dirichlet mixture weights, multinomial words.

    ``dirichlet_alpha=np.inf`` gives every document the uniform mixture.
    """
    rng = np.random.default_rng(rng)
    topics = np.atleast_2d(np.asarray(topics, dtype=float))
    K, V = topics.shape
    if np.isinf(dirichlet_alpha):
        mix = np.full((n_docs, K), 1.0 / K)
    else:
        mix = rng.dirichlet(np.full(K, float(dirichlet_alpha)), size=n_docs)
    probs = mix @ topics
    probs /= probs.sum(axis=1, keepdims=True)
    counts = rng.multinomial(doc_len, probs)
    return DocBatch(sp.csr_matrix(counts))


def sparse_topics(n_topics, V, rng, concentration=0.05):
    """Peaked simplex topics, each a Dirichlet draw with small concentration."""
    return rng.dirichlet(np.full(V, concentration), size=n_topics)


def sample_corpus(V, T, J, n_topics, docs_per_batch, doc_len, rng=None, tau0=None, tau1=None,
                  activity=0.6, alpha=0.1, topic_concentration=0.05):
    """Grouped, timestamped corpus around peaked, slowly drifting topics.

    Trajectories start at peaked Dirichlet topics embedded about the uniform
    point and drift by vMF steps; each (t, j) batch is rendered from the
    topics active there (at least one is always forced on).

    Returns
    -------
    truth : GroundTruth
    batches : dict mapping (t, j) to DocBatch
    simplex_topics : ndarray of shape (n_topics, T + 1, V)
    """
    from .hyper import ModelHyperparams

    rng = np.random.default_rng(rng)
    center = ReferencePoint.uniform(V)
    # per-step angle is about sqrt(V / tau0); near 0.01 rad by default.  Faster
    # drift pushes the boundary points back toward the centre quickly.
    tau0 = 1e4 * V if tau0 is None else tau0
    tau1 = 1e4 * V if tau1 is None else tau1
    base = sparse_topics(n_topics, V, rng, topic_concentration)
    hyper = ModelHyperparams(tau0=tau0, tau1=tau1, gamma0=1.0)
    truth = sample_hierarchical(hyper, V, J, T, rng, weights=np.full(n_topics, activity),
                                group_weights=np.full((J, n_topics), activity),
                                initial=embed(base, center))
    simplex = inverse_embed(truth.trajectories, center)
    batches = {}
    for t in range(1, T + 1):
        for j in range(J):
            act = truth.activity[t - 1, j]
            if not act.any():
                act[rng.integers(n_topics)] = True
            batches[(t, j)] = sample_documents(simplex[act, t], docs_per_batch, doc_len, alpha, rng)
    truth.extras = {"docs_per_batch": docs_per_batch, "doc_len": doc_len, "alpha": alpha}
    return truth, batches, simplex
