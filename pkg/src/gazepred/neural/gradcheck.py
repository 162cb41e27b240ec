"""Finite-difference verification of hand-written backward passes."""
from __future__ import annotations

import numpy as np

from ..errors import NumericError


def _as_tuple(x):
    return x if isinstance(x, tuple) else (x,)


def check_gradients(op, input_shapes, seed: int = 0, step: float = 1e-5,
                    check_inputs: bool = True) -> float:
    """Compare analytic and central-difference gradients at 64-bit precision.

    ``op`` is a module whose ``forward`` takes one array per entry of
    ``input_shapes`` and whose ``backward`` returns the matching input
    gradients. A fixed random projection of the output serves as the scalar
    objective. Errors are measured per tensor as
    ``|a - n| / max(|a|, |n|, floor)`` with Euclidean norms, and the maximum
    over all parameters (and inputs, if requested) is returned. The floor is
    ``max(1e-8, 1e-6 * largest gradient norm)`` so that tensors whose true
    gradient is structurally zero (e.g. attention key biases) are not judged
    on finite-difference round-off alone.
    """
    rng = np.random.default_rng(seed)
    op.astype(np.float64)
    op.eval()
    inputs = [rng.standard_normal(s) for s in input_shapes]

    out = op.forward(*inputs)
    proj = rng.standard_normal(np.shape(out))

    def objective():
        return float(np.sum(op.forward(*inputs) * proj))

    op.zero_grad()
    op.forward(*inputs)
    din = _as_tuple(op.backward(proj))

    targets = [(name, p.data, p.grad.copy()) for name, p in op.named_parameters().items()
               if p.trainable]
    if check_inputs:
        targets += [(f"input{i}", x, np.asarray(g)) for i, (x, g) in enumerate(zip(inputs, din))]

    results = []
    for name, arr, analytic in targets:
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = objective()
            flat[i] = orig - step
            fm = objective()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * step)
        if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
            raise NumericError(f"non-finite gradient encountered for parameter {name!r}")
        results.append((analytic, numeric))

    scale = max((np.linalg.norm(a) for a, _ in results), default=0.0)
    floor = max(1e-8, 1e-6 * scale)
    worst = 0.0
    for analytic, numeric in results:
        num = np.linalg.norm(analytic - numeric)
        den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
        worst = max(worst, num / den)
    return worst
