"""Streaming dynamic matching of one topic polytope over time.

At every timestep the noisy topic estimates are matched to the global
trajectories seen so far (or declared new) by one maximum-weight
assignment; matched trajectories take the vMF MAP update, unmatched ones
stay put.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_directions
from .assignment import solve_max_assignment
from .geometry import ReferencePoint, vmf_map_combine
from .hyper import ModelHyperparams, n_new_rows, new_topic_costs, popularity_log_odds


@dataclass
class GlobalTopicTrajectory:
    theta: np.ndarray
    popularity: int
    born_at: int
    history: list | None = None


@dataclass
class StepSummary:
    """What one step did: per-estimate global index plus counts."""

    assignment: np.ndarray
    matched: int
    new: int
    dormant: int


@dataclass
class SdmState:
    """Global trajectories after ``t`` processed timesteps."""

    trajectories: list = field(default_factory=list)
    t: int = 0
    hyper: ModelHyperparams = field(default_factory=ModelHyperparams)
    ref: ReferencePoint | None = None
    keep_history: bool = False
    last_step: StepSummary | None = None

    @property
    def n_topics(self):
        return len(self.trajectories)

    @property
    def thetas(self):
        if not self.trajectories:
            return np.zeros((0, 0))
        return np.vstack([tr.theta for tr in self.trajectories])

    @property
    def popularity(self):
        return np.array([tr.popularity for tr in self.trajectories], dtype=int)


def sdm_cost(state, estimates):
    """Cost matrix for matching ``estimates`` at timestep ``state.t + 1``.

    Rows ``i < L`` are existing trajectories with entry
    ``||tau1 v_k + tau0 theta_i|| - tau0 + log(m_i / (t - m_i))``; the
    following rows are potential new topics ``tau1 + log(gamma0 / t) - log(r)``.
    """
    hyper = state.hyper
    V = np.atleast_2d(np.asarray(estimates, dtype=float))
    K = V.shape[0]
    t = state.t + 1
    L = state.n_topics
    n_new = n_new_rows(L, K, hyper)
    cost = np.empty((L + n_new, K))
    if L:
        thetas = state.thetas
        anchor = hyper.tau0 * thetas
        sq = (
            (anchor * anchor).sum(axis=1)[:, None]
            + 2.0 * hyper.tau1 * (anchor @ V.T)
            + hyper.tau1**2 * (V * V).sum(axis=1)[None, :]
        )
        odds = popularity_log_odds(state.popularity, t, hyper)
        cost[:L] = np.sqrt(np.clip(sq, 0.0, None)) - hyper.tau0 + odds[:, None]
    cost[L:] = new_topic_costs(n_new, hyper.tau1, hyper.gamma0, t)[:, None]
    return cost


def sdm_step(state, estimates):
    """Process one timestep of estimates; returns the new state.

    The input state is not modified.  Trajectories that are not matched keep
    the very same ``theta`` array.
    """
    hyper = state.hyper
    V = np.atleast_2d(np.asarray(estimates, dtype=float))
    t = state.t + 1
    L = state.n_topics
    trajectories = [replace(tr) for tr in state.trajectories]

    if V.shape[0] == 0 or V.size == 0:
        summary = StepSummary(np.zeros(0, dtype=int), 0, 0, L)
        return replace(state, trajectories=trajectories, t=t, last_step=summary)

    sol = solve_max_assignment(sdm_cost(state, V))
    rows = sol.col_to_row
    assignment = np.empty(rows.size, dtype=int)
    matched = 0
    for k in np.flatnonzero(rows < L):
        i = rows[k]
        tr = trajectories[i]
        tr.theta = vmf_map_combine(tr.theta, hyper.tau0, V[k], hyper.tau1)
        tr.popularity += 1
        if tr.history is not None:
            tr.history = tr.history + [(t, tr.theta)]
        assignment[k] = i
        matched += 1
    new_cols = np.flatnonzero(rows >= L)
    for k in new_cols[np.argsort(rows[new_cols], kind="stable")]:
        history = [(t, V[k].copy())] if state.keep_history else None
        trajectories.append(GlobalTopicTrajectory(V[k].copy(), 1, t, history))
        assignment[k] = len(trajectories) - 1

    summary = StepSummary(assignment, matched, new_cols.size, L - matched)
    return replace(state, trajectories=trajectories, t=t, last_step=summary)


def sdm_objective(prev_thetas, new_thetas, B, estimates, m_counts, t, hyper):
    """Log posterior of one step up to terms independent of (theta, B).

    Parameters
    ----------
    prev_thetas : ndarray of shape (L, V)
        Trajectory positions at ``t - 1``.
    new_thetas : ndarray of shape (L + n, V)
        Positions at ``t``; rows ``>= L`` are the new topics.
    B : array of int, shape (K,)
        Row of ``new_thetas`` each estimate is assigned to.
    estimates : ndarray of shape (K, V)
    m_counts : array of shape (L,)
        Popularity counts through ``t - 1``.
    """
    prev_thetas = np.asarray(prev_thetas, dtype=float).reshape(-1, np.shape(estimates)[-1])
    new_thetas = np.asarray(new_thetas, dtype=float)
    B = np.asarray(B, dtype=int)
    L = prev_thetas.shape[0]
    estimates = np.atleast_2d(estimates)
    matched_existing = B[B < L]
    n_new = int((B >= L).sum())

    value = 0.0
    if matched_existing.size:
        value += popularity_log_odds(np.asarray(m_counts)[matched_existing], t, hyper).sum()
    if L:
        value += hyper.tau0 * np.einsum("ij,ij->", prev_thetas, new_thetas[:L])
    value += n_new * np.log(hyper.gamma0 / t) - gammaln(n_new + 1)
    value += hyper.tau1 * np.einsum("kj,kj->", new_thetas[B], estimates)
    return float(value)


class StreamingDynamicMatching(BaseEstimator):
    """Track global topics over a stream of per-timestep topic estimates.

    Parameters
    ----------
    tau0, tau1, gamma0 : float
        Dynamics concentration, estimate concentration and new-topic mass.
    saturation : int or None, default=250
    new_topic_cap : int, default=1
    popularity_cap : int or None, default=10
    keep_history : bool, default=False
        Store a snapshot of every trajectory whenever it moves.

    Attributes
    ----------
    thetas_ : ndarray of shape (n_topics, V)
    popularity_ : ndarray of shape (n_topics,)
    born_at_ : ndarray of shape (n_topics,)
    labels_ : ndarray
        Global topic of each estimate of the most recent timestep.
    t_ : int
    """

    def __init__(self, tau0=2.0, tau1=1.0, gamma0=1.0, saturation=250, new_topic_cap=1,
                 popularity_cap=10, keep_history=False):
        self.tau0 = tau0
        self.tau1 = tau1
        self.gamma0 = gamma0
        self.saturation = saturation
        self.new_topic_cap = new_topic_cap
        self.popularity_cap = popularity_cap
        self.keep_history = keep_history

    def _hyper(self):
        return ModelHyperparams(
            tau0=self.tau0, tau1=self.tau1, gamma0=self.gamma0, saturation=self.saturation,
            new_topic_cap_c=self.new_topic_cap, popularity_cap=self.popularity_cap,
        )

    def fit(self, X, y=None):
        """Run over a sequence of (K_t, V) estimate arrays from scratch."""
        self.__dict__.pop("state_", None)
        for Xt in X:
            self.partial_fit(Xt)
        return self

    def partial_fit(self, X, y=None):
        """Consume the estimates of the next timestep."""
        if not hasattr(self, "state_"):
            self.state_ = SdmState(hyper=self._hyper(), keep_history=self.keep_history)
            self.n_features_in_ = None
        X = check_directions(X, self.n_features_in_)
        if X.shape[0] and self.n_features_in_ is None:
            self.n_features_in_ = X.shape[1]
        self.state_ = sdm_step(self.state_, X)
        self._sync()
        return self

    def _sync(self):
        st = self.state_
        self.thetas_ = st.thetas
        self.popularity_ = st.popularity
        self.born_at_ = np.array([tr.born_at for tr in st.trajectories], dtype=int)
        self.labels_ = st.last_step.assignment
        self.t_ = st.t

    def predict(self, X):
        """Global topic each estimate would join now; ``-1`` means a new topic."""
        check_is_fitted(self, "state_")
        X = check_directions(X, self.n_features_in_, allow_empty=False)
        sol = solve_max_assignment(sdm_cost(self.state_, X))
        return np.where(sol.col_to_row < self.state_.n_topics, sol.col_to_row, -1)
