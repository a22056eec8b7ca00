"""Direct gradient-descent fits of free prediction stacks and scale fields.

A fit replaces the network with one free parameter per heatmap cell. The
prediction is squashed to (-0.05, 1.05); alpha is stored as is and turned
into s = 1 / (1 + alpha) only when a scale field is materialized.

Each person's prediction is passed through a Gaussian blur whose std equals
that person's label-jitter std, which limits how sharply the free stack can
localize an ambiguously labeled person. The blur is linear and self-adjoint,
so its gradient is the same filter applied to the incoming gradient.

An optional output blur over the whole stack bounds how narrow any fitted
peak can be. With narrow targets the fit then trades peak height against
spill onto background cells.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import expit, logit

from heatreg.config import NUM_KEYPOINTS
from heatreg.errors import FitDivergedError
from heatreg.models.grid import HeatmapStack, ScaleField, Shape3
from heatreg.models.schemas.fit import FitConfig, FitResult, Variant
from heatreg.models.schemas.report import LossReport
from heatreg.models.schemas.scene import SyntheticScene
from heatreg.services.decoder_grouper import find_peaks, refine_subpixel
from heatreg.services.evaluator import localization_errors
from heatreg.services.heatmap_codec import (
    encode_gaussian_with_owner,
    rasterize_scale_field,
    sahr_exact,
    shr_scale_from_bbox,
)
from heatreg.services.losses import grad_arrays, loss_terms
from heatreg.services.synth_gen import jitter_std

logger = logging.getLogger(__name__)

PRED_LOW = -0.05
PRED_SPAN = 1.10
# Keeps s = 1 / (1 + alpha) finite when materializing
ALPHA_FLOOR = -1.0 + 1e-6
INIT_NOISE = 1e-3
# Relative slack when comparing successive losses
ACCEPT_RTOL = 1e-12


def parameterize(pred: np.ndarray) -> np.ndarray:
    """Unconstrained parameters whose squashed value is pred (pred within (-0.05, 1.05))."""
    frac = (np.asarray(pred, dtype=np.float64) - PRED_LOW) / PRED_SPAN
    return logit(np.clip(frac, 1e-12, 1.0 - 1e-12))


def materialize(params: np.ndarray) -> np.ndarray:
    """Squash unconstrained parameters into (-0.05, 1.05); 0 maps to 0.5."""
    return PRED_LOW + PRED_SPAN * expit(params)


def _squash_slope(params: np.ndarray) -> np.ndarray:
    sig = expit(params)
    return PRED_SPAN * sig * (1.0 - sig)


def parameterize_scale(scale: np.ndarray) -> np.ndarray:
    """alpha = 1/s - 1."""
    return 1.0 / np.asarray(scale, dtype=np.float64) - 1.0


def materialize_scale(alpha: np.ndarray) -> np.ndarray:
    """s = 1 / (1 + alpha), with alpha floored just above -1."""
    return 1.0 / (1.0 + np.maximum(alpha, ALPHA_FLOOR))


@dataclass
class PredictionSurrogate:
    """Per-person blur of the free prediction stack, optionally followed by a blur of the whole stack."""
    regions: List[Tuple[np.ndarray, float]]
    background: np.ndarray
    output_std: float = 0.0

    @classmethod
    def build(
        cls,
        owner: np.ndarray,
        blur_stds: Sequence[float],
        output_std: float = 0.0,
    ) -> "PredictionSurrogate":
        regions = [(owner == p, float(std)) for p, std in enumerate(blur_stds)]
        return cls(regions=regions, background=owner < 0, output_std=float(output_std))

    @classmethod
    def identity(cls, shape: Shape3, output_std: float = 0.0) -> "PredictionSurrogate":
        return cls(regions=[], background=np.ones(shape, dtype=bool), output_std=float(output_std))

    @staticmethod
    def _blur(values: np.ndarray, std: float) -> np.ndarray:
        if std <= 0:
            return values
        return gaussian_filter(values, sigma=(0.0, std, std), mode="constant")

    def forward(self, q: np.ndarray) -> np.ndarray:
        out = np.where(self.background, q, 0.0)
        for mask, std in self.regions:
            out = out + np.where(mask, self._blur(q, std), 0.0)
        return self._blur(out, self.output_std)

    def adjoint(self, grad: np.ndarray) -> np.ndarray:
        grad = self._blur(grad, self.output_std)
        out = np.where(self.background, grad, 0.0)
        for mask, std in self.regions:
            out = out + self._blur(np.where(mask, grad, 0.0), std)
        return out


def _stack_shape(scene: SyntheticScene) -> Shape3:
    k = scene.noisy_persons[0].num_keypoints if scene.noisy_persons else NUM_KEYPOINTS
    return (k, scene.height, scene.width)


def _blur_stds(scene: SyntheticScene) -> List[float]:
    if not scene.scales:
        return [0.0] * scene.num_persons
    return [jitter_std(scene.jitter_coeff, m) for m in scene.scales]


def _report(cfg: FitConfig, terms: dict, n: int) -> LossReport:
    return LossReport(
        variant=cfg.variant.value,
        regression=terms["regression"],
        regularizer=terms["regularizer"],
        total=terms["total"],
        lambda_=cfg.lambda_,
        gamma=cfg.gamma if cfg.variant.weighted else None,
        element_count=n,
    )


def _loss_variant(variant: Variant) -> Variant:
    # SHR trains plain L2 against its precomputed target
    return Variant.BASE if variant == Variant.SHR else variant


def fit_direct(scene: SyntheticScene, cfg: FitConfig) -> FitResult:
    """
    Fit a free prediction (and, for sahr/swahr, alpha) to the scene's encoded labels.

    Steps are plain gradient descent with backtracking: prediction parameters
    move by lr * n * grad and alpha by lr * m * grad (n cells, m support cells);
    a step that would raise the total loss halves the learning rate and is
    retried, so the loss curve never increases.

    Raises:
        FitDivergedError: the loss or its gradient became non-finite
    """
    shape = _stack_shape(scene)
    base, owner = encode_gaussian_with_owner(scene.noisy_persons, cfg.sigma0, shape)
    variant = cfg.variant
    loss_variant = _loss_variant(variant)

    fixed_scale: Optional[ScaleField] = None
    target = base.data
    if variant == Variant.SHR:
        scales = [shr_scale_from_bbox(p.bbox[2], cfg.w_base) for p in scene.noisy_persons]
        fixed_scale = rasterize_scale_field(scene.noisy_persons, scales, shape, cfg.sigma0)
        target = sahr_exact(base, fixed_scale).data

    surrogate = (
        PredictionSurrogate.build(owner, _blur_stds(scene), cfg.output_blur)
        if cfg.prediction_blur
        else PredictionSurrogate.identity(shape, cfg.output_blur)
    )

    rng = np.random.default_rng(cfg.seed)
    u = parameterize(np.zeros(shape)) + INIT_NOISE * rng.standard_normal(shape)
    support = target > 0
    n = int(np.prod(shape))
    m = max(int(support.sum()), 1)
    trains_alpha = variant.learns_scale and not math.isinf(cfg.lambda_)
    alpha = np.zeros(shape)

    def evaluate(u_: np.ndarray, alpha_: np.ndarray):
        pred_ = surrogate.forward(materialize(u_))
        terms_ = loss_terms(loss_variant, pred_, target, alpha_, cfg.lambda_, cfg.gamma)
        return pred_, terms_

    pred, terms = evaluate(u, alpha)
    if not math.isfinite(terms["total"]):
        raise FitDivergedError(0)

    lr = cfg.learning_rate
    halvings = 0
    curve: List[LossReport] = []
    notes: List[str] = []
    for step in range(1, cfg.steps + 1):
        d_pred, d_alpha = grad_arrays(loss_variant, pred, target, alpha, cfg.lambda_, cfg.gamma)
        d_u = surrogate.adjoint(d_pred) * _squash_slope(u)
        if not (np.all(np.isfinite(d_u)) and np.all(np.isfinite(d_alpha))):
            raise FitDivergedError(step)

        accepted = False
        for _ in range(cfg.max_halvings + 1):
            u_new = u - lr * n * d_u
            alpha_new = alpha - lr * m * d_alpha if trains_alpha else alpha
            pred_new, terms_new = evaluate(u_new, alpha_new)
            total_new = terms_new["total"]
            if math.isfinite(total_new) and total_new <= terms["total"] * (1.0 + ACCEPT_RTOL):
                accepted = True
                break
            lr /= 2.0
            halvings += 1
            logger.info(f"Step {step}: loss would rise to {total_new:.6g}, learning rate halved to {lr:.3g}")

        if not accepted:
            if not math.isfinite(total_new):
                raise FitDivergedError(step)
            notes.append(f"stalled at step {step}: no decrease after {cfg.max_halvings} halvings")
            logger.info(notes[-1])
            break

        u, alpha, pred, terms = u_new, alpha_new, pred_new, terms_new
        curve.append(_report(cfg, terms, n))
        if step % cfg.log_every == 0:
            logger.debug(f"Step {step}/{cfg.steps}: total={terms['total']:.6g} lr={lr:.3g}")

    if fixed_scale is not None:
        final_scale = fixed_scale
    else:
        final_scale = ScaleField(np.where(support, materialize_scale(alpha), 1.0))

    per_person: List[Tuple[int, float]] = []
    for p in range(scene.num_persons):
        owned = owner == p
        mean_s = float(final_scale.data[owned].mean()) if owned.any() else 1.0
        per_person.append((p, mean_s))

    final_pred = HeatmapStack(pred)
    detections = [refine_subpixel(final_pred, d) for d in find_peaks(final_pred)]
    errors = localization_errors(detections, scene.persons, scene.canvas)
    logger.info(
        f"Fit {variant.value} seed={cfg.seed} done: total={terms['total']:.6g}, "
        f"halvings={halvings}, mean error={np.mean(errors) if errors else 0.0:.3f}px"
    )
    return FitResult(
        final_pred=final_pred,
        final_scale=final_scale,
        loss_curve=curve,
        per_person_mean_scale=per_person,
        localization_errors=errors,
        final_learning_rate=lr,
        halvings=halvings,
        notes=notes,
    )
