"""Toy-scale adversarial attack core: detector loss decomposition and PGD.

The detector is a seeded affine map from the flattened normalized image to
per-anchor class logits, box values, and an objectness logit. Gradients are
analytic (softmax / sigmoid / SmoothL1 derivatives composed with the affine
map), so every attack step is exactly reproducible and checkable against
finite differences. FGSM is the one-step, alpha = epsilon special case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import ImageBuffer
from .errors import NumericError, ShapeError, ValidationError

__all__ = [
    "ToyDetectorModel",
    "TargetAssignment",
    "AttackConfig",
    "AdversarialResult",
    "Predictions",
    "forward",
    "loss_components",
    "total_loss",
    "grad_input",
    "project_linf",
    "pgd_attack",
    "to_image_buffer",
]

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class ToyDetectorModel:
    width: int
    height: int
    anchors: int
    classes: int
    weight: np.ndarray  # (anchors * (classes + 5), width * height * 3)
    bias: np.ndarray  # (anchors * (classes + 5),)
    seed: int = 0

    def __post_init__(self):
        n_out = self.anchors * (self.classes + 5)
        n_in = self.width * self.height * 3
        if self.weight.shape != (n_out, n_in) or self.bias.shape != (n_out,):
            raise ShapeError(
                f"weight/bias shapes {self.weight.shape}/{self.bias.shape} "
                f"inconsistent with ({n_out}, {n_in})"
            )
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ValidationError("non-finite model parameters")

    @classmethod
    def random(
        cls, width: int, height: int, anchors: int, classes: int, seed: int,
        scale: float = 1.0,
    ) -> "ToyDetectorModel":
        rng = np.random.default_rng(seed)
        n_out = anchors * (classes + 5)
        n_in = width * height * 3
        weight = rng.normal(0.0, scale / np.sqrt(n_in), size=(n_out, n_in))
        bias = rng.normal(0.0, 0.1 * scale, size=n_out)
        return cls(width, height, anchors, classes, weight, bias, seed)


@dataclass(frozen=True)
class TargetAssignment:
    matched: np.ndarray  # (A,) bool; anchors assigned to ground-truth objects
    class_onehot: np.ndarray  # (A, C); rows of matched anchors sum to 1
    box_targets: np.ndarray  # (A, 4); x, y, w, h regression targets
    objectness: np.ndarray  # (A,) in {0, 1}

    def __post_init__(self):
        a = self.matched.shape[0]
        if self.class_onehot.shape[0] != a or self.box_targets.shape != (a, 4) \
                or self.objectness.shape != (a,):
            raise ShapeError("target arrays disagree on anchor count")
        rows = self.class_onehot[self.matched]
        if rows.size and not np.allclose(rows.sum(axis=1), 1.0):
            raise ValidationError("one-hot rows of matched anchors must sum to 1")
        if not np.isfinite(self.box_targets).all():
            raise ValidationError("non-finite box targets")

    @classmethod
    def random(cls, anchors: int, classes: int, seed: int) -> "TargetAssignment":
        rng = np.random.default_rng(seed)
        matched = rng.random(anchors) < 0.6
        if not matched.any():
            matched[0] = True
        onehot = np.zeros((anchors, classes))
        onehot[np.arange(anchors), rng.integers(0, classes, anchors)] = 1.0
        onehot[~matched] = 0.0
        return cls(
            matched=matched,
            class_onehot=onehot,
            box_targets=rng.normal(0.0, 1.0, size=(anchors, 4)),
            objectness=matched.astype(np.float64),
        )


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    steps: int
    step_size: float
    y_target: TargetAssignment | None = None  # None: untargeted
    lambda_loc: float = 1.0
    lambda_obj: float = 1.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.step_size <= 0:
            raise ValidationError(f"step size must be positive, got {self.step_size}")


@dataclass(frozen=True)
class AdversarialResult:
    x_star: np.ndarray
    loss_trace: tuple[dict[str, float], ...]  # per iteration: J, L_cls, L_loc, L_obj
    achieved_linf: float


@dataclass(frozen=True)
class Predictions:
    probs: np.ndarray  # (A, C), rows sum to 1
    boxes: np.ndarray  # (A, 4)
    objectness: np.ndarray  # (A,) in (0, 1)
    logits: np.ndarray = field(repr=False, default=None)  # (A, C + 5) raw


def _check_input(model: ToyDetectorModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    expected = (model.height, model.width, 3)
    if x.shape != expected and x.shape != (model.width * model.height * 3,):
        raise ShapeError(f"input shape {x.shape} does not match model dims {expected}")
    return x.reshape(-1)


def forward(model: ToyDetectorModel, x: np.ndarray) -> Predictions:
    """Affine map then per-anchor softmax (classes) and sigmoid (objectness)."""
    flat = _check_input(model, x)
    z = (model.weight @ flat + model.bias).reshape(model.anchors, model.classes + 5)
    cls_logits = z[:, : model.classes]
    shifted = cls_logits - cls_logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    obj = 1.0 / (1.0 + np.exp(-z[:, -1]))
    return Predictions(probs=probs, boxes=z[:, model.classes:-1], objectness=obj, logits=z)


def smooth_l1(z: np.ndarray) -> np.ndarray:
    az = np.abs(z)
    return np.where(az < 1.0, 0.5 * z * z, az - 0.5)


def loss_components(
    preds: Predictions, targets: TargetAssignment
) -> tuple[float, float, float]:
    """(L_cls, L_loc, L_obj): cross-entropy and SmoothL1 over matched anchors,
    binary cross-entropy over all anchors."""
    if preds.probs.shape[0] != targets.matched.shape[0]:
        raise ShapeError("predictions and targets disagree on anchor count")
    m = targets.matched
    p = np.clip(preds.probs, LOG_CLAMP, None)
    l_cls = float(-np.sum(targets.class_onehot[m] * np.log(p[m])))
    l_loc = float(np.sum(smooth_l1(targets.box_targets[m] - preds.boxes[m])))
    o = np.clip(preds.objectness, LOG_CLAMP, 1.0 - LOG_CLAMP)
    y = targets.objectness
    l_obj = float(-np.sum(y * np.log(o) + (1.0 - y) * np.log(1.0 - o)))
    return l_cls, l_loc, l_obj


def total_loss(
    preds: Predictions,
    targets: TargetAssignment,
    lambda_loc: float = 1.0,
    lambda_obj: float = 1.0,
) -> float:
    l_cls, l_loc, l_obj = loss_components(preds, targets)
    return l_cls + lambda_loc * l_loc + lambda_obj * l_obj


def _grad_logits(
    preds: Predictions, targets: TargetAssignment, lambda_loc: float, lambda_obj: float
) -> np.ndarray:
    """d L_total / d z for one target assignment, shape (A, C + 5)."""
    a, c = preds.probs.shape
    g = np.zeros((a, c + 5))
    m = targets.matched
    # Softmax cross-entropy: dL/dlogit = p - y on matched anchors.
    g[m, :c] = preds.probs[m] - targets.class_onehot[m]
    # SmoothL1 on raw box outputs: d/db_hat f(b - b_hat) = -f'(b - b_hat).
    diff = targets.box_targets[m] - preds.boxes[m]
    g[m, c:c + 4] = -lambda_loc * np.clip(diff, -1.0, 1.0)
    # Sigmoid BCE: dL/dlogit = o - y over all anchors.
    g[:, -1] = lambda_obj * (preds.objectness - targets.objectness)
    return g


def grad_input(
    model: ToyDetectorModel,
    x: np.ndarray,
    targets: TargetAssignment,
    y_target: TargetAssignment | None = None,
    lambda_loc: float = 1.0,
    lambda_obj: float = 1.0,
) -> np.ndarray:
    """Analytic gradient of the attack objective J with respect to the input.

    Untargeted: J = L_total(x, y). Targeted: J = L_total(x, y) -
    L_total(x, y_target), pushing predictions away from y and towards
    y_target.
    """
    flat = _check_input(model, x)
    preds = forward(model, flat)
    g_z = _grad_logits(preds, targets, lambda_loc, lambda_obj)
    if y_target is not None:
        g_z = g_z - _grad_logits(preds, y_target, lambda_loc, lambda_obj)
    grad = model.weight.T @ g_z.reshape(-1)
    return grad.reshape(np.asarray(x).shape)


def objective(
    model: ToyDetectorModel,
    x: np.ndarray,
    targets: TargetAssignment,
    y_target: TargetAssignment | None = None,
    lambda_loc: float = 1.0,
    lambda_obj: float = 1.0,
) -> float:
    preds = forward(model, x)
    j = total_loss(preds, targets, lambda_loc, lambda_obj)
    if y_target is not None:
        j -= total_loss(preds, y_target, lambda_loc, lambda_obj)
    return j


def project_linf(x_adv: np.ndarray, x_clean: np.ndarray, epsilon: float) -> np.ndarray:
    """Clamp into the L_inf ball around x_clean intersected with [0, 1]."""
    if x_adv.shape != x_clean.shape:
        raise ShapeError(f"shape mismatch {x_adv.shape} vs {x_clean.shape}")
    return np.clip(np.clip(x_adv, x_clean - epsilon, x_clean + epsilon), 0.0, 1.0)


def pgd_attack(
    model: ToyDetectorModel,
    x: np.ndarray,
    targets: TargetAssignment,
    config: AttackConfig,
) -> AdversarialResult:
    """Iterated sign-gradient ascent on J under the L_inf ball.

    The budget and pixel-range invariants hold after every iteration; the
    loss trace records J and its components at each iterate, including the
    final one (steps + 1 entries).
    """
    x = np.asarray(x, dtype=np.float64)
    if ((x < 0) | (x > 1)).any():
        raise ValidationError("input pixels must be normalized to [0, 1]")
    x_clean = x.copy()
    x_t = x.copy()
    trace = []

    def record(x_cur: np.ndarray) -> None:
        preds = forward(model, x_cur)
        l_cls, l_loc, l_obj = loss_components(preds, targets)
        j = objective(
            model, x_cur, targets, config.y_target, config.lambda_loc, config.lambda_obj
        )
        if not np.isfinite(j):
            raise NumericError(f"non-finite objective at iteration {len(trace)}")
        trace.append({"J": j, "L_cls": l_cls, "L_loc": l_loc, "L_obj": l_obj})

    record(x_t)
    for t in range(config.steps):
        g = grad_input(
            model, x_t, targets, config.y_target, config.lambda_loc, config.lambda_obj
        )
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient at iteration {t}")
        x_t = project_linf(x_t + config.step_size * np.sign(g), x_clean, config.epsilon)
        achieved = float(np.max(np.abs(x_t - x_clean)))
        if achieved > config.epsilon + 1e-9 or ((x_t < 0) | (x_t > 1)).any():
            raise NumericError(f"projection invariant violated at iteration {t}")
        record(x_t)

    return AdversarialResult(
        x_star=x_t,
        loss_trace=tuple(trace),
        achieved_linf=float(np.max(np.abs(x_t - x_clean))),
    )


def to_image_buffer(x: np.ndarray) -> ImageBuffer:
    """Export a normalized [0, 1] image as an 8-bit buffer (round to nearest)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected (h, w, 3) image, got {arr.shape}")
    return ImageBuffer(pixels=np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8))
