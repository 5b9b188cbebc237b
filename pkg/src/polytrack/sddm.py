"""Streaming dynamic distributed matching.

Every timestep runs distributed-matching sweeps over the groups, except that
global topics known from the previous timestep act as vMF anchors and the
prior uses group-specific popularity ``(1 + m_ji) / (t - m_ji)``.
"""
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning

from ._validation import check_directions
from .assignment import solve_max_assignment
from .dm import DEFAULT_MAX_SWEEPS, DmState, _existing_rows, install_group, remove_group
from .geometry import ReferencePoint, vmf_map_combine
from .hyper import ModelHyperparams, n_new_rows, new_topic_costs, popularity_log_odds


@dataclass
class SddmStepSummary:
    assignments: list
    matched: int
    new: int
    dormant: int
    n_sweeps: int
    converged: bool


@dataclass
class SddmState:
    """Global topics after ``t`` timesteps.

    Attributes
    ----------
    global_thetas : ndarray of shape (L, V)
    group_popularity : ndarray of shape (J, L)
        Timesteps at which each group used each topic.
    born_at : ndarray of shape (L,)
    step_matching : DmState or None
        Assignments of the timestep in progress (anchors are ``global_thetas``).
    """

    global_thetas: np.ndarray
    group_popularity: np.ndarray
    J: int
    t: int = 0
    hyper: ModelHyperparams = field(default_factory=lambda: ModelHyperparams.defaults("sddm"))
    born_at: np.ndarray = None
    ref: ReferencePoint | None = None
    step_matching: DmState | None = None
    last_step: SddmStepSummary | None = None

    def __post_init__(self):
        if self.born_at is None:
            self.born_at = np.zeros(self.global_thetas.shape[0], dtype=int)

    @classmethod
    def empty(cls, J, vocab_size, hyper=None):
        hyper = hyper or ModelHyperparams.defaults("sddm")
        return cls(np.zeros((0, vocab_size)), np.zeros((J, 0), dtype=int), J, 0, hyper)

    @property
    def n_topics(self):
        return self.global_thetas.shape[0]


def sddm_prior_odds(state, j):
    """Per existing row of the in-progress matching: ``log((1 + m_ji) / (t - m_ji))``."""
    matching = state.step_matching
    t = state.t + 1
    m = np.zeros(matching.n_topics)
    m[:matching.n_anchored] = state.group_popularity[j, :matching.n_anchored]
    return popularity_log_odds(m, t, state.hyper, plus_one=True)


def sddm_structural_cost(state, j, estimates_j=None):
    """``||tau1 v + tau1 R + tau0 theta_prev|| - ||tau1 R + tau0 theta_prev||`` per existing row.

    Topics born during this timestep have no anchor and reduce to
    ``tau1 ||v + R|| - tau1 ||R||``.
    """
    matching = state.step_matching
    V = matching.estimates[j] if estimates_j is None else np.atleast_2d(estimates_j)
    return _existing_rows(matching, j, V)


def sddm_group_cost(state, j, estimates_j=None, odds=None, new_scale=None):
    """Cost matrix for group ``j`` within the current timestep.

    The in-progress matching must already have group ``j`` removed.
    ``odds`` (one value per existing row) and ``new_scale`` (the divisor of
    gamma0 in the new-topic rows, J by default) replace the prior terms; they
    exist so the costs can be compared against the other models.
    """
    hyper = state.hyper
    matching = state.step_matching
    V = matching.estimates[j] if estimates_j is None else np.atleast_2d(estimates_j)
    L = matching.n_topics
    K = V.shape[0]
    n_new = n_new_rows(L, K, hyper)
    cost = np.empty((L + n_new, K))
    if L:
        prior = sddm_prior_odds(state, j) if odds is None else np.asarray(odds, dtype=float)
        cost[:L] = sddm_structural_cost(state, j, V) + prior[:, None]
    scale = state.J if new_scale is None else new_scale
    cost[L:] = new_topic_costs(n_new, hyper.tau1, hyper.gamma0, scale)[:, None]
    return cost


def sddm_step(state, estimates_per_group, rng, max_sweeps=DEFAULT_MAX_SWEEPS, cost_fn=None):
    """Match one timestep of per-group estimates; returns the new state.

    Parameters
    ----------
    state : SddmState
    estimates_per_group : list of length J
        (K_j, V) arrays; ``None`` or empty for groups silent at this step.
    rng : numpy.random.Generator
        Drives the random group order of every sweep.
    cost_fn : callable, optional
        ``cost_fn(work_state, j)`` replacing :func:`sddm_group_cost`.
    """
    hyper = state.hyper
    V = state.global_thetas.shape[1]
    estimates = []
    for e in estimates_per_group:
        e = np.zeros((0, V)) if e is None else np.asarray(e, dtype=float).reshape(-1, V)
        estimates.append(e)
    if len(estimates) != state.J:
        raise ValueError(f"expected {state.J} groups, got {len(estimates)}")

    L_prev = state.n_topics
    matching = DmState(estimates=estimates, hyper=hyper, anchors=state.global_thetas)
    work = replace(state, step_matching=matching)
    active = np.array([j for j, e in enumerate(estimates) if e.shape[0]], dtype=int)

    converged, n_sweeps = True, 0
    if active.size:
        converged = False
        for n_sweeps in range(1, max_sweeps + 1):
            changed = False
            for j in rng.permutation(active):
                j = int(j)
                before = matching.partition()
                remove_group(matching, j)
                sol = solve_max_assignment((cost_fn or sddm_group_cost)(work, j))
                install_group(matching, j, sol.col_to_row)
                changed |= matching.partition() != before
            if not changed:
                converged = True
                break

    thetas = np.empty((matching.n_topics, V))
    matched = 0
    for i, mem in enumerate(matching.members):
        obs = [estimates[j][k] for j, k in sorted(mem.items())]
        if i < L_prev:
            if obs:
                thetas[i] = vmf_map_combine(state.global_thetas[i], hyper.tau0, obs, hyper.tau1)
                matched += 1
            else:
                thetas[i] = state.global_thetas[i]
        else:
            thetas[i] = vmf_map_combine(None, 0.0, obs, 1.0)

    t = state.t + 1
    n_new = matching.n_topics - L_prev
    popularity = np.zeros((state.J, matching.n_topics), dtype=int)
    popularity[:, :L_prev] = state.group_popularity
    for i, mem in enumerate(matching.members):
        for j in mem:
            popularity[j, i] += 1
    born_at = np.concatenate([state.born_at, np.full(n_new, t, dtype=int)])
    summary = SddmStepSummary(matching.group_assignments, matched, n_new, L_prev - matched,
                              n_sweeps, converged)
    return replace(state, global_thetas=thetas, group_popularity=popularity, t=t,
                   born_at=born_at, step_matching=None, last_step=summary)


class StreamingDynamicDistributedMatching(BaseEstimator):
    """Track global topics over a stream of grouped topic estimates.

    Parameters
    ----------
    n_groups : int
    tau0, tau1, gamma0 : float, default=4.0, 2.0, 2.0
    saturation, new_topic_cap, popularity_cap
        Growth controls, see :class:`~polytrack.hyper.ModelHyperparams`.
    max_sweeps : int, default=100
    random_state : int or None
        Seeds the group order; each timestep derives its own stream, so a
        run split across several ``partial_fit`` calls matches one ``fit``.
    """

    def __init__(self, n_groups, tau0=4.0, tau1=2.0, gamma0=2.0, saturation=250, new_topic_cap=1,
                 popularity_cap=10, max_sweeps=DEFAULT_MAX_SWEEPS, random_state=None):
        self.n_groups = n_groups
        self.tau0 = tau0
        self.tau1 = tau1
        self.gamma0 = gamma0
        self.saturation = saturation
        self.new_topic_cap = new_topic_cap
        self.popularity_cap = popularity_cap
        self.max_sweeps = max_sweeps
        self.random_state = random_state

    def fit(self, X, y=None):
        """``X`` is a sequence of timesteps, each a list of per-group arrays."""
        self.__dict__.pop("state_", None)
        for Xt in X:
            self.partial_fit(Xt)
        return self

    def partial_fit(self, X, y=None):
        groups = [None if g is None or np.size(g) == 0 else check_directions(g) for g in X]
        if not hasattr(self, "state_"):
            dims = {g.shape[1] for g in groups if g is not None}
            if len(dims) != 1:
                raise ValueError("first timestep must fix a single vocabulary size")
            hyper = ModelHyperparams(
                tau0=self.tau0, tau1=self.tau1, gamma0=self.gamma0, saturation=self.saturation,
                new_topic_cap_c=self.new_topic_cap, popularity_cap=self.popularity_cap,
            )
            self.state_ = SddmState.empty(self.n_groups, dims.pop(), hyper)
            self.n_features_in_ = self.state_.global_thetas.shape[1]
        rng = step_rng(self.random_state, self.state_.t + 1)
        self.state_ = sddm_step(self.state_, groups, rng, self.max_sweeps)
        st = self.state_
        self.thetas_ = st.global_thetas
        self.group_popularity_ = st.group_popularity
        self.assignments_ = st.last_step.assignments
        self.t_ = st.t
        if not st.last_step.converged:
            warnings.warn(f"timestep {st.t}: no fixed point after {self.max_sweeps} sweeps",
                          ConvergenceWarning)
        return self


def step_rng(seed, t):
    """Independent generator for timestep ``t`` of a run seeded with ``seed``."""
    entropy = 0 if seed is None else seed
    return np.random.default_rng(np.random.SeedSequence([int(entropy), int(t)]))
