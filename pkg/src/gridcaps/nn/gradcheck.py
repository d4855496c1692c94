"""Finite-difference verification of analytic gradients.

Models are checked in float64 with dropout disabled; the report carries
the normalized max deviation per parameter block.
"""

import numpy as np


def grad_check(loss_fn, params, h=1e-5):
    """Compare analytic grads against central differences.

    ``loss_fn()`` must run forward+backward, accumulating grads into the
    given ``params`` (list of (name, Tensor)), and return the scalar
    loss. Returns {name: relative_error}.
    """
    for _, p in params:
        p.zero_grad()
    loss_fn()
    analytic = {name: p.grad.copy() for name, p in params}

    report = {}
    for name, p in params:
        flat = p.values.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            for _, q in params:
                q.zero_grad()
            lp = loss_fn()
            flat[i] = orig - h
            for _, q in params:
                q.zero_grad()
            lm = loss_fn()
            flat[i] = orig
            fd[i] = (lp - lm) / (2.0 * h)
        fd = fd.reshape(p.values.shape)
        scale = max(np.abs(fd).max(), np.abs(analytic[name]).max(), 1e-12)
        report[name] = float(np.abs(fd - analytic[name]).max() / scale)

    for _, p in params:
        p.zero_grad()
    return report
