import numpy as np
from sklearn.utils.validation import check_array

from .geometry import UNIT_ATOL


def check_directions(X, vocab_size=None, allow_empty=True, name="X"):
    """Validate a (K, V) array of unit directions."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if X.size else X.reshape(0, vocab_size or 0)
    if X.shape[0] == 0:
        if not allow_empty:
            raise ValueError(f"{name} must contain at least one direction")
        return X.reshape(0, vocab_size if vocab_size is not None else X.shape[1])
    X = check_array(X, dtype=np.float64, ensure_min_samples=1, input_name=name)
    if vocab_size is not None and X.shape[1] != vocab_size:
        raise ValueError(f"{name} has {X.shape[1]} coordinates, expected {vocab_size}")
    bad = np.abs(np.linalg.norm(X, axis=1) - 1.0) > UNIT_ATOL
    if bad.any():
        raise ValueError(f"{name} row {int(np.flatnonzero(bad)[0])} is not unit norm")
    return X
