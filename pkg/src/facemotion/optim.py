"""Adam optimizer and gradient clipping.

Weight decay is rejected outright: the only shrinkage in this model is the
explicit L1 term on the mesh embedding, and silently mixing in decoupled
decay would double-count it.
"""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam with bias correction.

    ``params`` is a list of (name, Tensor). Updates use
    p -= lr * m_hat / (sqrt(v_hat) + eps). Parameters whose name is in the
    ``skip`` set of step() keep their values and their optimizer state
    untouched, which implements warm-up freezing.
    """

    def __init__(
        self,
        params,
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        if weight_decay != 0.0:
            raise ValueError("weight decay is not supported; use the L1 regularizer")
        self.params = list(params)
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}
        self.t = {n: 0 for n, _ in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self, skip=()):
        skip = set(skip)
        for name, p in self.params:
            if name in skip or p.grad is None:
                continue
            g = p.grad
            self.t[name] += 1
            t = self.t[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * (g * g)
            m_hat = self.m[name] / (1 - self.beta1**t)
            v_hat = self.v[name] / (1 - self.beta2**t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Optimizer state as named arrays, for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name in self.m:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
            out[f"t.{name}"] = np.asarray(float(self.t[name]))
        return out

    def load_state(self, arrays: dict[str, np.ndarray]):
        for name in self.m:
            self.m[name] = np.asarray(arrays[f"m.{name}"], dtype=np.float64).reshape(
                self.m[name].shape
            )
            self.v[name] = np.asarray(arrays[f"v.{name}"], dtype=np.float64).reshape(
                self.v[name].shape
            )
            self.t[name] = int(round(float(arrays[f"t.{name}"])))


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm. Parameters without gradients are skipped.
    """
    total = 0.0
    grads = [p.grad for _, p in params if p.grad is not None]
    for g in grads:
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm
