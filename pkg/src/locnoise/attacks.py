"""Mask-localized white-box attacks: FGSM, PGD, and a C&W-style descent.

All three optimize a noise field N that is confined to a binary mask M and
added to the image as x' = clamp(x + N * M, 0, 1):

  fgsm:  N = eps * sign(grad_x J(x, y)) * M                    (one step)
  pgd:   N <- clip_inf(N + alpha * sign(grad_x J(x', y)) * M, eps)
  cw:    N <- N - eta * (C * grad_x g(x') + 2 N) * M,
         g(x') = max(Z(x')_y - max_{i != y} Z(x')_i, -kappa)

The cw margin g is positive while the model still prefers the clean label
y, so descending on it trades noise energy for misclassification.

y is always the model's own clean-input label, so no ground-truth labels
are needed. FGSM succeeds when the clean label's confidence drops by the
configured fraction; the iterative attacks succeed on the first
misclassification and report the step that achieved it.

Noise state is kept in float32, so budget guarantees are exact in the image
dtype: PGD noise never exceeds float32(eps) in absolute value and FGSM noise
elements are exactly -eps, 0, or +eps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .masks import Mask, build_mask
from .net import Network, Prediction, forward, input_gradient, logit_gradient
from .tensor import Tensor

METHODS = ("fgsm", "pgd", "cw")

# attack hyperparameter defaults; epsilon differs per method
DEFAULT_EPSILON = {"fgsm": 0.05, "pgd": 0.02, "cw": 0.02}
DEFAULT_ALPHA = 0.01
DEFAULT_ETA = 0.01
DEFAULT_C = 10.0
DEFAULT_KAPPA = 1000.0
DEFAULT_MAX_ITERS = 250
DEFAULT_CONFIDENCE_DROP = 0.5


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters for one attack method.

    epsilon caps the L-inf noise magnitude (fgsm step size / pgd ball; the
    cw objective is bounded only by its quadratic penalty and pixel
    clamping). alpha is the pgd step, eta the cw learning rate, c the cw
    margin weight, kappa the cw margin floor. fgsm_confidence_drop is the
    relative confidence reduction fgsm must reach to count as a success.
    """

    method: str
    epsilon: float
    alpha: float = DEFAULT_ALPHA
    eta: float = DEFAULT_ETA
    c: float = DEFAULT_C
    kappa: float = DEFAULT_KAPPA
    max_iters: int = DEFAULT_MAX_ITERS
    fgsm_confidence_drop: float = DEFAULT_CONFIDENCE_DROP
    pgd_random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.fgsm_confidence_drop <= 1.0:
            raise ValueError(
                f"fgsm_confidence_drop must be in (0, 1], got {self.fgsm_confidence_drop}"
            )

    @classmethod
    def defaults(cls, method: str, **overrides) -> "AttackConfig":
        """Config with the standard hyperparameters for `method`."""
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
        cfg = cls(method=method, epsilon=DEFAULT_EPSILON[method])
        return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True)
class AttackOutcome:
    """Result of one attack on one image."""

    success: bool
    iterations_used: int
    noise: Tensor
    adversarial_image: Tensor
    clean_prediction: Prediction
    adversarial_prediction: Prediction


def project_linf(noise: Tensor, epsilon: float) -> Tensor:
    """Project noise onto the L-inf ball of radius epsilon (elementwise clip)."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    eps = np.float32(epsilon)
    return Tensor(np.clip(noise.data, -eps, eps), copy=False)


def _active(mask: Mask, x: Tensor) -> np.ndarray:
    h, w, _ = x.shape
    if (h, w) != mask.shape:
        raise ValueError(f"image {h}x{w} does not match mask {mask.shape[0]}x{mask.shape[1]}")
    return mask.active()[:, :, None]


def _masked(values: np.ndarray, sel: np.ndarray) -> np.ndarray:
    return np.where(sel, values, np.float32(0.0))


def _compose(x: Tensor, noise: np.ndarray, sel: np.ndarray) -> Tensor:
    return Tensor(np.clip(x.data + _masked(noise, sel), np.float32(0), np.float32(1)), copy=False)


def fgsm_localized(net: Network, x: Tensor, mask: Mask, cfg: AttackConfig) -> AttackOutcome:
    """Single gradient-sign step of size epsilon, confined to the mask."""
    sel = _active(mask, x)
    clean = forward(net, x)
    grad = input_gradient(net, x, clean.label)
    noise = _masked(np.float32(cfg.epsilon) * np.sign(grad.data), sel)
    adv = _compose(x, noise, sel)
    adv_pred = forward(net, adv)
    threshold = (1.0 - cfg.fgsm_confidence_drop) * clean.confidence
    success = float(adv_pred.probabilities[clean.label]) <= threshold
    return AttackOutcome(
        success=success,
        iterations_used=1,
        noise=Tensor(noise, copy=False),
        adversarial_image=adv,
        clean_prediction=clean,
        adversarial_prediction=adv_pred,
    )


def pgd_localized(net: Network, x: Tensor, mask: Mask, cfg: AttackConfig) -> AttackOutcome:
    """Iterated sign steps projected back onto the epsilon ball each round."""
    sel = _active(mask, x)
    clean = forward(net, x)
    eps = np.float32(cfg.epsilon)
    alpha = np.float32(cfg.alpha)
    if cfg.pgd_random_start:
        start = np.random.default_rng(cfg.seed).uniform(-cfg.epsilon, cfg.epsilon, x.shape)
        noise = _masked(start.astype(np.float32), sel)
    else:
        noise = np.zeros(x.shape, dtype=np.float32)
    adv = _compose(x, noise, sel)
    adv_pred = forward(net, adv)
    success = False
    iterations = 0
    for t in range(1, cfg.max_iters + 1):
        grad = input_gradient(net, adv, clean.label)
        step = _masked(alpha * np.sign(grad.data), sel)
        noise = np.clip(noise + step, -eps, eps)
        adv = _compose(x, noise, sel)
        adv_pred = forward(net, adv)
        iterations = t
        if adv_pred.label != clean.label:
            success = True
            break
    return AttackOutcome(
        success=success,
        iterations_used=iterations,
        noise=Tensor(_masked(noise, sel), copy=False),
        adversarial_image=adv,
        clean_prediction=clean,
        adversarial_prediction=adv_pred,
    )


def cw_localized(
    net: Network,
    x: Tensor,
    mask: Mask,
    cfg: AttackConfig,
    init_noise: Tensor | None = None,
) -> AttackOutcome:
    """Gradient descent on C * margin + ||N||_2^2, confined to the mask.

    The margin term g = max(Z_y - max_{i != y} Z_i, -kappa) pushes the
    runner-up logit above the clean label's; the quadratic penalty
    (gradient 2N) keeps the noise small in place of an explicit epsilon
    ball. init_noise overrides the zero start, which is mostly useful for
    isolating the penalty term in tests.
    """
    sel = _active(mask, x)
    clean = forward(net, x)
    y = clean.label
    eta = np.float32(cfg.eta)
    c_w = np.float32(cfg.c)
    if init_noise is not None:
        noise = _masked(init_noise.data, sel)
    else:
        noise = np.zeros(x.shape, dtype=np.float32)
    adv = _compose(x, noise, sel)
    adv_pred = forward(net, adv)
    success = False
    iterations = 0
    direction = np.zeros(net.num_classes)
    for t in range(1, cfg.max_iters + 1):
        z = adv_pred.logits
        runner_up = np.delete(np.arange(net.num_classes), y)[
            int(np.argmax(np.delete(z, y)))
        ]
        margin = max(float(z[y] - z[runner_up]), -cfg.kappa)
        if margin > -cfg.kappa:
            direction[:] = 0.0
            direction[y] = 1.0
            direction[runner_up] = -1.0
            margin_grad = logit_gradient(net, adv, direction).data
        else:
            margin_grad = np.float32(0.0)
        total = c_w * margin_grad + np.float32(2.0) * noise
        noise = noise - eta * _masked(total, sel)
        adv = _compose(x, noise, sel)
        adv_pred = forward(net, adv)
        iterations = t
        if adv_pred.label != y:
            success = True
            break
    return AttackOutcome(
        success=success,
        iterations_used=iterations,
        noise=Tensor(_masked(noise, sel), copy=False),
        adversarial_image=adv,
        clean_prediction=clean,
        adversarial_prediction=adv_pred,
    )


def run_attack(net: Network, x: Tensor, gamma: float, cfg: AttackConfig) -> AttackOutcome:
    """Build the centered mask for gamma and dispatch to cfg.method."""
    mask = build_mask(x.height, x.width, gamma)
    if cfg.method == "fgsm":
        return fgsm_localized(net, x, mask, cfg)
    if cfg.method == "pgd":
        return pgd_localized(net, x, mask, cfg)
    return cw_localized(net, x, mask, cfg)
