import math

import numpy as np

from ..errors import ValidationError


def _count(rate: float, n: int) -> int:
    # round first so that e.g. 0.1 * 30 does not ceil to 4
    return min(n, math.ceil(round(rate * n, 9)))


def goss_sample(gradients, a: float, b: float, seed):
    """Gradient-based one-side sampling.

    Keeps the ceil(a*n) rows with the largest |gradient| at weight 1 and a
    uniform draw of ceil(b*n) of the rest at weight (1 - a) / b. Returns
    ``(indices, weights)`` with indices ascending.
    """
    g = np.asarray(gradients, dtype=np.float64)
    n = g.size
    if n < 1:
        raise ValidationError("goss_sample needs at least one row")
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0) or a + b > 1.0 + 1e-12:
        raise ValidationError(f"need 0 <= a, b and a + b <= 1, got a={a}, b={b}")
    if a == 0.0 and b == 0.0:
        raise ValidationError("a and b cannot both be zero")

    order = np.argsort(-np.abs(g), kind="stable")
    n_top = _count(a, n)
    top = order[:n_top]
    rest = order[n_top:]
    n_other = min(_count(b, n), rest.size) if b > 0 else 0
    rng = np.random.default_rng(seed)
    other = rng.choice(rest, size=n_other, replace=False) if n_other else np.empty(0, dtype=np.int64)

    idx = np.concatenate([top, other]).astype(np.int64)
    w = np.concatenate([np.ones(top.size), np.full(other.size, (1.0 - a) / b if b > 0 else 1.0)])
    perm = np.argsort(idx, kind="stable")
    return idx[perm], w[perm]
