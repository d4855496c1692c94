"""Capsule classifier: conv front end, primary/digit capsules, routing.

The network maps a PMU window (N_G x T x 2) to one vector per load-bus
class; vector length encodes the probability that the bus is the attack
source. Coupling between primary and digit capsules is decided by an
agreement loop run inside every forward pass, while the transition
matrices only change through the outer gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError
from .nn import backend
from .nn.layers import Conv2D, Dropout, ReLU, Sequential, softmax, softmax_backward
from .nn.tensor import Tensor

SQUASH_EPS = 1e-8
ROUTING_ITERS = 5


@dataclass(frozen=True)
class CapsPlan:
    """Layer geometry for one grid case."""

    case: str
    input_shape: tuple               # (N_G, T, 2)
    conv1_kernels: int
    conv1_size: tuple
    conv1_stride: tuple
    dropout_rate: float
    conv2_kernels: int
    conv2_size: tuple
    conv2_stride: tuple
    primary_count: int
    primary_dim: int
    digit_count: int
    digit_dim: int
    routing_iters: int = ROUTING_ITERS

    def conv_output_shapes(self):
        h, w, _ = self.input_shape
        h1 = (h - self.conv1_size[0]) // self.conv1_stride[0] + 1
        w1 = (w - self.conv1_size[1]) // self.conv1_stride[1] + 1
        h2 = (h1 - self.conv2_size[0]) // self.conv2_stride[0] + 1
        w2 = (w1 - self.conv2_size[1]) // self.conv2_stride[1] + 1
        return (h1, w1, self.conv1_kernels), (h2, w2, self.conv2_kernels)

    def validate(self):
        if self.routing_iters < 1:
            raise StructuralError("routing needs at least one iteration")
        _, (h2, w2, c2) = self.conv_output_shapes()
        if h2 <= 0 or w2 <= 0:
            raise StructuralError(f"plan {self.case}: conv stack collapses the input")
        if self.primary_count * self.primary_dim != h2 * w2 * c2:
            raise StructuralError(
                f"plan {self.case}: {self.primary_count}x{self.primary_dim} primary "
                f"capsules cannot be reshaped from conv output {h2}x{w2}x{c2}"
            )
        return self


_PLANS = {
    "ieee14": dict(input_shape=(5, 100, 2), conv2_size=(2, 2), conv2_stride=(1, 2),
                   primary_count=640, primary_dim=8, digit_count=9, digit_dim=16),
    "ieee39": dict(input_shape=(10, 100, 2), conv2_size=(2, 2), conv2_stride=(2, 2),
                   primary_count=800, primary_dim=8, digit_count=29, digit_dim=16),
    "ieee57": dict(input_shape=(7, 100, 2), conv2_size=(2, 5), conv2_stride=(1, 1),
                   primary_count=576, primary_dim=16, digit_count=50, digit_dim=32),
}


def plan_for_case(case: str) -> CapsPlan:
    """Published layer plan for ieee14 / ieee39 / ieee57."""
    try:
        spec = _PLANS[case]
    except KeyError:
        raise StructuralError(f"no capsule plan for case {case!r}") from None
    plan = CapsPlan(case=case, conv1_kernels=512, conv1_size=(1, 10),
                    conv1_stride=(1, 10), dropout_rate=0.1, conv2_kernels=256, **spec)
    return plan.validate()


@dataclass(frozen=True)
class MarginLossConfig:
    m_plus: float = 0.9
    m_minus: float = 0.1
    lam: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.m_minus < self.m_plus < 1.0:
            raise StructuralError("margin loss needs 0 < m_minus < m_plus < 1")


def squash(d, axis=-1):
    """Norm-bounding nonlinearity: keeps direction, length in [0, 1)."""
    d = np.asarray(d)
    norm2 = np.sum(np.square(d), axis=axis, keepdims=True)
    norm = np.sqrt(norm2)
    scale = np.where(norm > SQUASH_EPS, norm / (1.0 + norm2), 0.0)
    return scale * d


def squash_backward(gv, d, axis=-1):
    """Gradient of squash at ``d`` applied to upstream ``gv``."""
    norm2 = np.sum(np.square(d), axis=axis, keepdims=True)
    norm = np.sqrt(norm2)
    safe = norm > SQUASH_EPS
    scale = np.where(safe, norm / (1.0 + norm2), 0.0)
    dcoef = np.where(safe, (1.0 - norm2) / (np.square(1.0 + norm2) * np.maximum(norm, SQUASH_EPS)), 0.0)
    inner = np.sum(gv * d, axis=axis, keepdims=True)
    return scale * gv + dcoef * inner * d


def dynamic_routing(predictions, iters=ROUTING_ITERS, record=False):
    """Agreement loop allocating coupling between capsule layers.

    ``predictions`` has shape (n, P, Q, d). Logits start at zero, are
    softmaxed per primary capsule, and grow with the dot product between
    each prediction and the squashed digit output. Returns the digit
    vectors, the final couplings, and (optionally) the cache needed to
    backpropagate through the unrolled loop.
    """
    if iters < 1:
        raise StructuralError("routing needs at least one iteration")
    u = np.asarray(predictions)
    single = u.ndim == 3
    if single:
        u = u[None]
    kern = backend.active()
    n, p, q, _ = u.shape
    logits = np.zeros((n, p, q), dtype=u.dtype)
    saved = []
    for i in range(iters):
        coup = softmax(logits, axis=2)
        d = kern.caps_weighted_sum(coup, u)
        v = squash(d, axis=2)
        if record:
            saved.append((coup, d, v))
        if i < iters - 1:
            logits = logits + kern.caps_agreement(u, v)
    cache = (u, iters, saved) if record else None
    if single:
        return v[0], coup[0], cache
    return v, coup, cache


def routing_backward(cache, gv):
    """Backprop through the unrolled agreement loop; returns dL/dpredictions."""
    u, iters, saved = cache
    kern = backend.active()
    gu = np.zeros_like(u)
    gb = None
    for i in reversed(range(iters)):
        coup, d, v = saved[i]
        if i == iters - 1:
            gv_i = gv
        else:
            gv_i = kern.caps_weighted_sum(gb, u)
            gu = kern.caps_outer_acc(gu, gb, v)
        gd = squash_backward(gv_i, d, axis=2)
        gu = kern.caps_outer_acc(gu, coup, gd)
        gc = kern.caps_agreement(u, gd)
        gb_prev = softmax_backward(gc, coup, axis=2)
        if gb is not None:
            gb_prev = gb_prev + gb
        gb = gb_prev
    return gu


def margin_loss(v, labels, cfg: MarginLossConfig = MarginLossConfig()):
    """Per-class hinge loss on digit vector lengths, averaged over the batch."""
    loss, _ = margin_loss_grad(v, labels, cfg)
    return loss


def margin_loss_grad(v, labels, cfg: MarginLossConfig = MarginLossConfig()):
    """Loss and its gradient wrt the digit vectors."""
    v = np.asarray(v)
    single = v.ndim == 2
    if single:
        v = v[None]
    labels = np.atleast_1d(labels)
    n, q, _ = v.shape
    norms = np.sqrt(np.sum(np.square(v), axis=2))
    onehot = np.zeros((n, q), dtype=v.dtype)
    onehot[np.arange(n), labels] = 1.0

    pos = np.maximum(0.0, cfg.m_plus - norms)
    neg = np.maximum(0.0, norms - cfg.m_minus)
    per_caps = onehot * pos ** 2 + cfg.lam * (1.0 - onehot) * neg ** 2
    loss = float(per_caps.sum(axis=1).mean())

    gnorm = (-2.0 * onehot * pos + 2.0 * cfg.lam * (1.0 - onehot) * neg) / n
    gv = (gnorm / np.maximum(norms, SQUASH_EPS))[:, :, None] * v
    return loss, (gv[0] if single else gv)


def _rng_for(seed, *tag):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tag)]))


class CapsNet:
    """Full capsule classifier for one case."""

    kind = "capsnet"

    def __init__(self, plan: CapsPlan, class_ids, seed=0, dtype=np.float32):
        if len(class_ids) != plan.digit_count:
            raise StructuralError(
                f"plan expects {plan.digit_count} classes, got {len(class_ids)}"
            )
        self.plan = plan
        self.class_ids = tuple(int(c) for c in class_ids)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)

        conv1 = Conv2D(plan.input_shape[2], plan.conv1_kernels, plan.conv1_size,
                       plan.conv1_stride, rng=_rng_for(seed, 1), dtype=self.dtype)
        conv2 = Conv2D(plan.conv1_kernels, plan.conv2_kernels, plan.conv2_size,
                       plan.conv2_stride, rng=_rng_for(seed, 2), dtype=self.dtype)
        self.front = Sequential(
            [conv1, ReLU(), Dropout(plan.dropout_rate), conv2, ReLU()],
            names=["conv1", "relu1", "dropout", "conv2", "relu2"],
        )

        # one transition block per digit class, seeded by the class's bus id
        # so relabeling classes permutes the model instead of changing it
        p, q, dp, dq = plan.primary_count, plan.digit_count, plan.primary_dim, plan.digit_dim
        w = np.empty((p, q, dp, dq), dtype=self.dtype)
        # fan-in of a digit capsule is the whole routed sum (P * d_p);
        # anything larger saturates the squash at init and stalls training
        std = np.sqrt(2.0 / (p * dp))
        for j, cid in enumerate(self.class_ids):
            block = _rng_for(seed, 3, cid).normal(0.0, std, size=(p, dp, dq))
            w[:, j] = block.astype(self.dtype)
        self.caps_w = Tensor(w)

    # -- parameters ----------------------------------------------------
    def params(self):
        return self.front.params() + [("caps.weights", self.caps_w)]

    def zero_grad(self):
        for _, t in self.params():
            t.zero_grad()

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        self.front.astype(dtype)
        self.caps_w.values = self.caps_w.values.astype(dtype)
        self.caps_w.grad = None
        return self

    # -- forward / backward --------------------------------------------
    def _normalize(self, x):
        from .training import standardize_windows
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.plan.input_shape:
            raise StructuralError(
                f"window shape {x.shape[1:]} does not match plan {self.plan.input_shape}"
            )
        return standardize_windows(x)

    def forward(self, x, training=False, rng=None):
        """Returns (digit vectors (n,Q,dq), class scores (n,Q), cache)."""
        xn = self._normalize(x)
        feat, front_cache = self.front.forward(xn, training=training, rng=rng)
        n = feat.shape[0]
        plan = self.plan
        zp = feat.reshape(n, plan.primary_count, plan.primary_dim)

        p, q, dp, dq = self.caps_w.shape
        wm = np.ascontiguousarray(self.caps_w.values.transpose(0, 2, 1, 3).reshape(p, dp, q * dq))
        u = np.matmul(zp.transpose(1, 0, 2), wm)          # (P, n, Q*dq)
        u = np.ascontiguousarray(u.transpose(1, 0, 2).reshape(n, p, q, dq))

        v, coup, route_cache = dynamic_routing(u, plan.routing_iters, record=training)
        scores = np.sqrt(np.sum(np.square(v), axis=2))
        cache = (front_cache, feat.shape, zp, wm, route_cache) if training else None
        return v, scores, cache

    def backward(self, cache, gv):
        front_cache, feat_shape, zp, wm, route_cache = cache
        plan = self.plan
        p, q, dp, dq = self.caps_w.shape
        n = zp.shape[0]

        gu = routing_backward(route_cache, gv)
        gu_flat = np.ascontiguousarray(gu.reshape(n, p, q * dq).transpose(1, 0, 2))
        zp_t = zp.transpose(1, 2, 0)                      # (P, dp, n)
        gw = np.matmul(zp_t, gu_flat)                     # (P, dp, Q*dq)
        gw = gw.reshape(p, dp, q, dq).transpose(0, 2, 1, 3)
        self.caps_w.add_grad(gw)

        gzp = np.matmul(gu_flat, wm.transpose(0, 2, 1))   # (P, n, dp)
        gfeat = np.ascontiguousarray(gzp.transpose(1, 0, 2)).reshape(feat_shape)
        return self.front.backward(front_cache, gfeat)

    # -- classifier protocol -------------------------------------------
    def loss_and_backward(self, x, labels, rng=None):
        v, scores, cache = self.forward(x, training=True, rng=rng)
        loss, gv = margin_loss_grad(v, labels)
        self.backward(cache, gv)
        correct = int(np.sum(np.argmax(scores, axis=1) == labels))
        return loss, correct

    def scores(self, x):
        _, s, _ = self.forward(x, training=False)
        return s

    def eval_loss(self, x, labels):
        v, scores, _ = self.forward(x, training=False)
        loss, _ = margin_loss_grad(v, labels)
        correct = int(np.sum(np.argmax(scores, axis=1) == labels))
        return loss, correct

    @classmethod
    def build(cls, case, class_ids, seed=0, dtype=np.float32):
        return cls(plan_for_case(case), class_ids, seed=seed, dtype=dtype)


def predict(model, windows) -> np.ndarray:
    """Class indices via argmax over vector lengths; ties take the lowest index."""
    x = np.asarray(windows)
    if x.ndim == 3:
        x = x[None]
    return np.argmax(model.scores(x), axis=1)
