"""Regression, regularizer and weight-adaptive losses with analytic gradients.

All squared-error terms are reduced by the mean over elements; the
regularizer by the mean over the support mask. Sums are accumulated with
``math.fsum`` in row-major order, so every reduction is exactly rounded and
independent of how the array is partitioned. The weight field of the
weight-adaptive loss is a constant for differentiation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Union

import numpy as np

from heatreg.config import settings
from heatreg.errors import DimensionError, InvalidParameterError
from heatreg.models.grid import HeatmapStack, SupportMask
from heatreg.models.schemas.fit import Variant
from heatreg.models.schemas.report import LossReport
from heatreg.services.heatmap_codec import log_base, taylor_array

logger = logging.getLogger(__name__)

LOSS_VARIANTS = (Variant.BASE, Variant.SAHR, Variant.WAHR, Variant.SWAHR)


class WeightField(HeatmapStack):
    """Per-element loss weights; finite and non-negative."""

    def _validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise InvalidParameterError("Weight field contains non-finite values")
        if np.any(self.data < 0):
            raise InvalidParameterError("Weight field must be non-negative")


@dataclass(frozen=True)
class GradientPair:
    """Gradients w.r.t. the prediction and alpha (zeros when alpha is not trained)."""
    d_pred: HeatmapStack
    d_alpha: HeatmapStack

    def __post_init__(self):
        for name in ("d_pred", "d_alpha"):
            if not np.all(np.isfinite(getattr(self, name).data)):
                raise InvalidParameterError(f"Gradient {name} is not finite")


def _fsum(values: np.ndarray) -> float:
    return math.fsum(np.ravel(values).tolist())


def _mean(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    return _fsum(values) / values.size


def _check_gamma(gamma: float) -> None:
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")


def _check_lambda(lambda_: float) -> None:
    if math.isnan(lambda_) or lambda_ < 0:
        raise InvalidParameterError(f"lambda must be non-negative, got {lambda_}")


def _frozen(lambda_: float) -> bool:
    """lambda = +inf freezes alpha at 0."""
    return math.isinf(lambda_)


def _coerce_variant(variant: Union[str, Variant]) -> Variant:
    v = Variant(variant)
    if v not in LOSS_VARIANTS:
        raise InvalidParameterError(
            f"Loss variant must be one of {[x.value for x in LOSS_VARIANTS]}, got {v.value}"
        )
    return v


def l2_loss(pred: HeatmapStack, target: HeatmapStack) -> float:
    """Mean over all elements of (pred - target)^2."""
    pred.require_same_shape(target)
    diff = pred.data - target.data
    return _mean(diff * diff)


def _regularizer(alpha: np.ndarray, mask: np.ndarray) -> float:
    count = int(mask.sum())
    if count == 0:
        return 0.0
    masked = alpha[mask]
    return _fsum(masked * masked) / count


def regularizer_loss(alpha: HeatmapStack, mask: SupportMask) -> float:
    """Mean of alpha^2 over the support mask; 0 for an empty mask."""
    if alpha.shape != mask.shape:
        raise DimensionError(f"Shape mismatch: {alpha.shape} vs {mask.shape}")
    return _regularizer(alpha.data, mask.data)


def weight_array(pred: np.ndarray, target: np.ndarray, gamma: float) -> np.ndarray:
    """W = T^g |1 - P| + |P| (1 - T^g), with 0^g = 0 and T^g kept within [0, 1]."""
    _check_gamma(gamma)
    positive = target > 0
    hg = np.zeros(target.shape, dtype=np.float64)
    hg[positive] = np.power(target[positive], gamma)
    np.clip(hg, 0.0, 1.0, out=hg)
    return hg * np.abs(1.0 - pred) + np.abs(pred) * (1.0 - hg)


def wahr_weights(pred: HeatmapStack, target: HeatmapStack, gamma: float = settings.GAMMA) -> WeightField:
    """Weight field emphasizing hard foreground cells."""
    pred.require_same_shape(target)
    return WeightField(weight_array(pred.data, target.data, gamma))


def soft_boundary(gamma: float) -> float:
    """Target value p = 2^(-1/gamma) where the two weight regimes balance."""
    _check_gamma(gamma)
    return 2.0 ** (-1.0 / gamma)


def wahr_loss(
    pred: HeatmapStack,
    target: HeatmapStack,
    gamma: float = settings.GAMMA,
    weights: Optional[HeatmapStack] = None,
) -> float:
    """Mean of W * (pred - target)^2; W from wahr_weights unless given."""
    pred.require_same_shape(target)
    w = weight_array(pred.data, target.data, gamma) if weights is None else weights.data
    diff = pred.data - target.data
    return _mean(w * diff * diff)


def loss_terms(
    variant: Union[str, Variant],
    pred: np.ndarray,
    base: np.ndarray,
    alpha: Optional[np.ndarray],
    lambda_: float = settings.LAMBDA,
    gamma: float = settings.GAMMA,
    weights: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    """
    Array-level loss evaluation shared by every report and the optimizer.

    Returns:
        Dict with "regression", "regularizer" and "total"
    """
    v = _coerce_variant(variant)
    _check_lambda(lambda_)
    if v.learns_scale:
        a = np.zeros(base.shape) if alpha is None or _frozen(lambda_) else alpha
        target = taylor_array(base, a)
        regularizer = 0.0 if _frozen(lambda_) else _regularizer(a, base > 0)
    else:
        target = base
        regularizer = 0.0

    diff = pred - target
    sq = diff * diff
    if v.weighted:
        w = weight_array(pred, target, gamma) if weights is None else weights
        sq = w * sq
    regression = _mean(sq)

    if _frozen(lambda_) or regularizer == 0.0:
        total = regression
    else:
        total = regression + lambda_ * regularizer
    return {"regression": regression, "regularizer": regularizer, "total": total}


def variant_loss(
    variant: Union[str, Variant],
    pred: HeatmapStack,
    base: HeatmapStack,
    alpha: Optional[HeatmapStack] = None,
    lambda_: float = settings.LAMBDA,
    gamma: float = settings.GAMMA,
    weights: Optional[HeatmapStack] = None,
) -> LossReport:
    """LossReport of any loss variant against the base target."""
    v = _coerce_variant(variant)
    pred.require_same_shape(base)
    if alpha is not None:
        base.require_same_shape(alpha)
    terms = loss_terms(
        v,
        pred.data,
        base.data,
        None if alpha is None else alpha.data,
        lambda_,
        gamma,
        None if weights is None else weights.data,
    )
    return LossReport(
        variant=v.value,
        regression=terms["regression"],
        regularizer=terms["regularizer"],
        total=terms["total"],
        lambda_=lambda_,
        gamma=gamma if v.weighted else None,
        element_count=pred.size,
    )


def total_sahr_loss(
    pred: HeatmapStack,
    base: HeatmapStack,
    alpha: HeatmapStack,
    lambda_: float = settings.LAMBDA,
) -> LossReport:
    """Scale-adaptive loss: L2 against the expanded target plus lambda times the regularizer."""
    return variant_loss(Variant.SAHR, pred, base, alpha, lambda_)


def swahr_loss(
    pred: HeatmapStack,
    base: HeatmapStack,
    alpha: HeatmapStack,
    lambda_: float = settings.LAMBDA,
    gamma: float = settings.GAMMA,
    weights: Optional[HeatmapStack] = None,
) -> LossReport:
    """Scale-adaptive loss whose squared errors are weighted against the expanded target."""
    return variant_loss(Variant.SWAHR, pred, base, alpha, lambda_, gamma, weights)


def grad_arrays(
    variant: Union[str, Variant],
    pred: np.ndarray,
    base: np.ndarray,
    alpha: Optional[np.ndarray],
    lambda_: float = settings.LAMBDA,
    gamma: float = settings.GAMMA,
    weights: Optional[np.ndarray] = None,
):
    """Array-level analytic gradients; returns (d_pred, d_alpha)."""
    v = _coerce_variant(variant)
    _check_lambda(lambda_)
    n = pred.size
    d_alpha = np.zeros(base.shape, dtype=np.float64)

    trains_alpha = v.learns_scale and not _frozen(lambda_)
    if v.learns_scale:
        a = alpha if trains_alpha and alpha is not None else np.zeros(base.shape)
        target = taylor_array(base, a)
    else:
        a = None
        target = base

    resid = pred - target
    if v.weighted:
        w = weight_array(pred, target, gamma) if weights is None else weights
        resid = w * resid
    d_pred = 2.0 * resid / n

    if trains_alpha:
        support = base > 0
        ln_b = log_base(base)
        d_target = np.where(support, base * (1.0 + a * ln_b) * ln_b, 0.0)
        d_alpha = -d_pred * d_target
        m = int(support.sum())
        if m > 0 and lambda_ > 0:
            d_alpha = d_alpha + lambda_ * 2.0 * a * support / m
    return d_pred, d_alpha


def grad_loss(
    variant: Union[str, Variant],
    pred: HeatmapStack,
    base: HeatmapStack,
    alpha: Optional[HeatmapStack] = None,
    lambda_: float = settings.LAMBDA,
    gamma: float = settings.GAMMA,
    weights: Optional[HeatmapStack] = None,
) -> GradientPair:
    """
    Analytic partial derivatives of the variant's scalar loss.

    The chain rule through the expanded target uses
    d H / d alpha = base * (1 + alpha ln base) * ln base on support. Weights
    are held constant.
    """
    pred.require_same_shape(base)
    if alpha is not None:
        base.require_same_shape(alpha)
    d_pred, d_alpha = grad_arrays(
        variant,
        pred.data,
        base.data,
        None if alpha is None else alpha.data,
        lambda_,
        gamma,
        None if weights is None else weights.data,
    )
    return GradientPair(d_pred=HeatmapStack(d_pred), d_alpha=HeatmapStack(d_alpha))


def finite_diff_grad(
    loss_fn: Callable[[Dict[str, np.ndarray]], float],
    params: Dict[str, np.ndarray],
    epsilon: float = settings.FD_EPSILON,
) -> Dict[str, np.ndarray]:
    """
    Central-difference gradient of a scalar loss over named parameter arrays.

    Each element is perturbed by +/- epsilon in turn with every other
    parameter held fixed; the quotient uses the step actually realized in
    floating point.

    Args:
        loss_fn: Maps a dict of arrays (same keys and shapes as params) to a float
        params: Point at which to differentiate; not modified
        epsilon: Perturbation size

    Returns:
        Dict of gradient arrays keyed like params
    """
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon}")

    point = {name: np.array(value, dtype=np.float64, copy=True) for name, value in params.items()}
    grads: Dict[str, np.ndarray] = {}
    for name, arr in point.items():
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        out = grad.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            upper = original + epsilon
            lower = original - epsilon
            flat[idx] = upper
            loss_up = loss_fn(point)
            flat[idx] = lower
            loss_down = loss_fn(point)
            flat[idx] = original
            out[idx] = (loss_up - loss_down) / (upper - lower)
        grads[name] = grad
    return grads
