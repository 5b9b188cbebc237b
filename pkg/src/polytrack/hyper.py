"""Model hyperparameters and the prior terms shared by all matching costs."""
from dataclasses import asdict, dataclass

import numpy as np

# denominator floor for popularity odds whose "miss" count is zero
ODDS_DENOMINATOR_FLOOR = 0.5


@dataclass(frozen=True)
class ModelHyperparams:
    """Concentrations, Beta-process mass and the growth-control knobs.

    Parameters
    ----------
    tau0 : float
        Concentration of the vMF dynamics between consecutive timesteps.
    tau1 : float
        Concentration of noisy estimates around their global topic.
    gamma0 : float
        Beta-process mass; controls the rate of new topics.
    saturation : int or None
        Once the number of global topics exceeds this, at most
        ``new_topic_cap_c`` topics may be created per assignment.
    new_topic_cap_c : int
    popularity_cap : int or None
        Popularity counts are truncated here before entering the odds.
    """

    tau0: float = 2.0
    tau1: float = 1.0
    gamma0: float = 1.0
    saturation: int | None = 250
    new_topic_cap_c: int = 1
    popularity_cap: int | None = 10

    def __post_init__(self):
        if self.tau0 < 0 or self.tau1 < 0:
            raise ValueError("tau0 and tau1 must be non-negative")
        if self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if self.new_topic_cap_c < 1:
            raise ValueError("new_topic_cap_c must be a positive integer")
        if self.saturation is not None and self.saturation < 1:
            raise ValueError("saturation must be a positive integer or None")
        if self.popularity_cap is not None and self.popularity_cap < 1:
            raise ValueError("popularity_cap must be a positive integer or None")

    @classmethod
    def defaults(cls, kind, **overrides):
        """Experiment defaults: SDM 2/1/1, DM -/2/1, SDDM 4/2/2 (tau0/tau1/gamma0)."""
        base = {
            "sdm": dict(tau0=2.0, tau1=1.0, gamma0=1.0),
            "dm": dict(tau0=0.0, tau1=2.0, gamma0=1.0),
            "sddm": dict(tau0=4.0, tau1=2.0, gamma0=2.0),
        }[kind]
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def to_dict(self):
        return asdict(self)


def capped(counts, hyper):
    counts = np.asarray(counts, dtype=float)
    if hyper.popularity_cap is None:
        return counts
    return np.minimum(counts, hyper.popularity_cap)


def popularity_log_odds(counts, total, hyper, plus_one=False):
    """``log(m / (total - m))`` with capped ``m`` and a floored denominator.

    ``plus_one`` gives the group-specific variant ``log((1 + m) / (total - m))``.
    """
    m = capped(counts, hyper)
    num = m + 1.0 if plus_one else m
    return np.log(num) - np.log(np.maximum(total - m, ODDS_DENOMINATOR_FLOOR))


def n_new_rows(n_topics, n_estimates, hyper):
    """How many potential-new-topic rows the cost matrix gets."""
    if hyper.saturation is not None and n_topics > hyper.saturation:
        # keep rows >= columns so every estimate stays placeable
        return max(min(n_estimates, hyper.new_topic_cap_c), n_estimates - n_topics)
    return n_estimates


def new_topic_costs(n_rows, tau1, gamma0, scale):
    """``tau1 + log(gamma0 / scale) - log(r)`` for r = 1..n_rows."""
    r = np.arange(1, n_rows + 1, dtype=float)
    return tau1 + np.log(gamma0 / scale) - np.log(r)
