"""Squared error (on transformed targets) and pinball loss."""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError

MSE = "MseLog"
PINBALL = "Pinball"


def check_loss(loss: str, quantile: float | None) -> None:
    if loss == MSE:
        return
    if loss == PINBALL:
        if quantile is None or not 0.0 < quantile < 1.0:
            raise ValidationError(f"pinball loss needs a quantile in (0, 1), got {quantile}")
        return
    raise ValidationError(f"unknown loss {loss!r}")


def loss_grad_hess(loss: str, y, yhat, quantile: float | None = None):
    """Gradient and (constant unit) hessian of the loss w.r.t. the prediction."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if loss == MSE:
        g = yhat - y
    elif loss == PINBALL:
        g = np.where(y > yhat, -quantile, 1.0 - quantile)
    else:
        raise ValidationError(f"unknown loss {loss!r}")
    h = np.ones_like(g)
    if g.ndim == 0:
        return float(g), float(h)
    return g, h


def loss_value(loss: str, y, yhat, quantile: float | None = None) -> float:
    r = np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64)
    if loss == MSE:
        return float(np.mean(r * r))
    return float(np.mean(np.maximum(quantile * r, (quantile - 1.0) * r)))


def initial_score(loss: str, y, quantile: float | None = None) -> float:
    y = np.asarray(y, dtype=np.float64)
    if loss == MSE:
        return float(np.mean(y))
    return float(np.quantile(y, quantile, method="inverted_cdf"))
