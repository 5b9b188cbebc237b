"""Distributed matching: many groups' topic sets onto one global polytope.

Each group is (re)assigned in turn given all others by one maximum-weight
assignment; sweeping until nothing changes reaches a local MAP optimum.
The bookkeeping class :class:`DmState` is also used for the per-timestep
matching of the streaming distributed model, where some global topics carry
an anchor from the previous timestep.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning

from ._validation import check_directions
from .assignment import solve_max_assignment
from .hyper import ModelHyperparams, n_new_rows, new_topic_costs, popularity_log_odds

DEFAULT_MAX_SWEEPS = 100


@dataclass
class DmState:
    """Assignment of every group's local topics to global topics.

    Attributes
    ----------
    estimates : list of ndarray
        Per group, a (K_j, V) array of unit directions (K_j may be 0).
    members : list of dict
        Per global topic, ``{group: local index}``; at most one local topic
        per group.
    hyper : ModelHyperparams
    anchors : ndarray of shape (n_anchored, V) or None
        Previous-timestep positions of the first ``n_anchored`` global
        topics, which are never deleted.  ``None`` for plain DM.
    """

    estimates: list
    members: list = field(default_factory=list)
    hyper: ModelHyperparams = field(default_factory=lambda: ModelHyperparams.defaults("dm"))
    anchors: np.ndarray | None = None
    converged: bool = True
    n_sweeps: int = 0

    def __post_init__(self):
        if self.anchors is not None and not self.members:
            self.members = [{} for _ in range(self.anchors.shape[0])]

    @property
    def group_count(self):
        return len(self.estimates)

    @property
    def vocab_size(self):
        for e in self.estimates:
            if e.size:
                return e.shape[1]
        return 0 if self.anchors is None else self.anchors.shape[1]

    @property
    def n_anchored(self):
        return 0 if self.anchors is None else self.anchors.shape[0]

    @property
    def n_topics(self):
        return len(self.members)

    def resultants(self, exclude=None):
        """Per topic, the sum of assigned estimates (optionally leaving one group out)."""
        out = np.zeros((self.n_topics, self.vocab_size))
        for i, mem in enumerate(self.members):
            for j in sorted(mem):
                if j != exclude:
                    out[i] += self.estimates[j][mem[j]]
        return out

    def counts(self, exclude=None):
        return np.array([len(m) - (exclude in m) for m in self.members], dtype=int)

    @property
    def global_thetas(self):
        """Normalized resultants (topics with no members get a zero row)."""
        R = self.resultants()
        norms = np.linalg.norm(R, axis=1, keepdims=True)
        return np.divide(R, norms, out=np.zeros_like(R), where=norms > 0)

    @property
    def group_assignments(self):
        """Per group, the global index of each local topic (-1 if unassigned)."""
        out = [np.full(e.shape[0], -1, dtype=int) for e in self.estimates]
        for i, mem in enumerate(self.members):
            for j, k in mem.items():
                out[j][k] = i
        return out

    def partition(self):
        """Hashable assignment structure independent of new-topic numbering."""
        anchored = tuple(frozenset(m.items()) for m in self.members[:self.n_anchored])
        free = frozenset(frozenset(m.items()) for m in self.members[self.n_anchored:])
        return anchored, free


def remove_group(state, j):
    """Drop group ``j``'s assignments; unanchored topics left empty are deleted."""
    keep = []
    for i, mem in enumerate(state.members):
        mem.pop(j, None)
        if mem or i < state.n_anchored:
            keep.append(mem)
    state.members = keep
    return state


def _existing_rows(state, j, estimates_j):
    """Structural part of the existing-topic rows (without prior odds)."""
    hyper = state.hyper
    R = state.resultants(exclude=j)
    base = hyper.tau1 * R
    if state.anchors is not None:
        base[:state.n_anchored] += hyper.tau0 * state.anchors
    V = estimates_j
    sq = (
        (base * base).sum(axis=1)[:, None]
        + 2.0 * hyper.tau1 * (base @ V.T)
        + hyper.tau1**2 * (V * V).sum(axis=1)[None, :]
    )
    return np.sqrt(np.clip(sq, 0.0, None)) - np.linalg.norm(base, axis=1)[:, None]


def dm_structural_cost(state, j, estimates_j=None):
    """``tau1 ||v + R_i|| - tau1 ||R_i||`` over existing topics, leave-one-out state."""
    V = state.estimates[j] if estimates_j is None else np.atleast_2d(estimates_j)
    return _existing_rows(state, j, V)


def dm_prior_odds(state, j, n_groups=None):
    """Per existing topic, ``log(m_-j / (J - m_-j))`` with cap and floor."""
    J = state.group_count if n_groups is None else n_groups
    return popularity_log_odds(state.counts(exclude=j), J, state.hyper)


def dm_group_cost(state, j, estimates_j=None, n_groups=None):
    """Cost matrix for re-assigning group ``j`` given all other groups.

    ``state`` must already have group ``j`` removed (see :func:`remove_group`).
    ``n_groups`` replaces J in the prior terms (used by the sequential
    initialization, where it is the 1-based position of the group).
    """
    hyper = state.hyper
    V = state.estimates[j] if estimates_j is None else np.atleast_2d(estimates_j)
    J = state.group_count if n_groups is None else n_groups
    L = state.n_topics
    K = V.shape[0]
    n_new = n_new_rows(L, K, hyper)
    cost = np.empty((L + n_new, K))
    if L:
        cost[:L] = _existing_rows(state, j, V) + dm_prior_odds(state, j, J)[:, None]
    cost[L:] = new_topic_costs(n_new, hyper.tau1, hyper.gamma0, J)[:, None]
    return cost


def install_group(state, j, col_to_row):
    """Record group ``j``'s solved assignment; rows past the end create topics."""
    L = state.n_topics
    col_to_row = np.asarray(col_to_row)
    for k in np.flatnonzero(col_to_row < L):
        state.members[col_to_row[k]][j] = int(k)
    new_cols = np.flatnonzero(col_to_row >= L)
    for k in new_cols[np.argsort(col_to_row[new_cols], kind="stable")]:
        state.members.append({j: int(k)})
    return state


def dm_sweep(state, j, estimates_j=None, n_groups=None, cost_fn=None):
    """Re-assign group ``j`` optimally given the others (mutates ``state``)."""
    if estimates_j is not None:
        state.estimates[j] = np.atleast_2d(estimates_j)
    remove_group(state, j)
    if state.estimates[j].shape[0] == 0:
        return state
    cost = (cost_fn or dm_group_cost)(state, j, n_groups=n_groups)
    sol = solve_max_assignment(cost)
    return install_group(state, j, sol.col_to_row)


def dm_group_objective(state, j, col_to_topic, n_groups=None):
    """Conditional log posterior of group ``j``'s assignment given the others.

    ``state`` is the leave-one-out state; ``col_to_topic[k]`` is an existing
    topic index or ``-1`` for a new topic.
    """
    hyper = state.hyper
    J = state.group_count if n_groups is None else n_groups
    V = state.estimates[j]
    col_to_topic = np.asarray(col_to_topic)
    R = state.resultants(exclude=j)
    odds = dm_prior_odds(state, j, J)
    value = 0.0
    for k, i in enumerate(col_to_topic):
        if i >= 0:
            value += hyper.tau1 * (np.linalg.norm(V[k] + R[i]) - np.linalg.norm(R[i])) + odds[i]
    n_new = int((col_to_topic < 0).sum())
    value += n_new * (hyper.tau1 + np.log(hyper.gamma0 / J)) - gammaln(n_new + 1)
    return float(value)


def dm_run(groups, hyper=None, rng=None, max_sweeps=DEFAULT_MAX_SWEEPS):
    """Match all groups to a common set of global topics.

    Initialization is one sequential pass over a random group order where the
    1-based position stands in for the number of groups; then full sweeps in
    fresh random orders until no group's re-assignment changes anything
    during a whole sweep, or ``max_sweeps`` is hit
    (``state.converged`` is False in that case).
    """
    hyper = hyper or ModelHyperparams.defaults("dm")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    estimates = [check_directions(g) for g in groups]
    if not estimates:
        raise ValueError("need at least one group")
    state = DmState(estimates=estimates, hyper=hyper)
    J = len(estimates)

    for pos, j in enumerate(rng.permutation(J), start=1):
        dm_sweep(state, int(j), n_groups=pos)

    state.converged = False
    for sweep in range(1, max_sweeps + 1):
        changed = False
        for j in rng.permutation(J):
            before = state.partition()
            dm_sweep(state, int(j))
            changed |= state.partition() != before
        state.n_sweeps = sweep
        if not changed:
            state.converged = True
            break
    return state


class DistributedMatching(BaseEstimator):
    """Match per-group topic estimates to shared global topics.

    Parameters
    ----------
    tau1 : float, default=2.0
    gamma0 : float, default=1.0
    saturation, new_topic_cap, popularity_cap
        Growth controls, see :class:`~polytrack.hyper.ModelHyperparams`.
    max_sweeps : int, default=100
    random_state : int, Generator or None

    Attributes
    ----------
    thetas_ : ndarray of shape (n_topics, V)
    assignments_ : list of ndarray
        Per group, global topic index of each local topic.
    popularity_ : ndarray of shape (n_topics,)
    converged_ : bool
    n_sweeps_ : int
    """

    def __init__(self, tau1=2.0, gamma0=1.0, saturation=250, new_topic_cap=1, popularity_cap=10,
                 max_sweeps=DEFAULT_MAX_SWEEPS, random_state=None):
        self.tau1 = tau1
        self.gamma0 = gamma0
        self.saturation = saturation
        self.new_topic_cap = new_topic_cap
        self.popularity_cap = popularity_cap
        self.max_sweeps = max_sweeps
        self.random_state = random_state

    def fit(self, X, y=None):
        """``X`` is a list with one (K_j, V) array per group."""
        hyper = ModelHyperparams(
            tau0=0.0, tau1=self.tau1, gamma0=self.gamma0, saturation=self.saturation,
            new_topic_cap_c=self.new_topic_cap, popularity_cap=self.popularity_cap,
        )
        self.state_ = dm_run(X, hyper, self.random_state, self.max_sweeps)
        self.thetas_ = self.state_.global_thetas
        self.assignments_ = self.state_.group_assignments
        self.popularity_ = self.state_.counts()
        self.converged_ = self.state_.converged
        self.n_sweeps_ = self.state_.n_sweeps
        if not self.converged_:
            warnings.warn(f"no fixed point after {self.max_sweeps} sweeps", ConvergenceWarning)
        return self
