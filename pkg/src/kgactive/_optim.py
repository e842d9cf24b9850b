"""Minimal Adam optimizer over named numpy parameter arrays."""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._scratch: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place from ``grads`` (missing keys are skipped)."""
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            p = params[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            if name not in self._scratch:
                self._scratch[name] = (np.empty_like(p), np.empty_like(p))
            num, den = self._scratch[name]
            # Same operation order as the naive expressions, minus the
            # per-step temporaries: m += (1-b1)*g; v += ((1-b2)*g)*g;
            # p -= lr*(m/bias1) / (sqrt(v/bias2)+eps).
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=num)
            m += num
            v *= self.beta2
            np.multiply(g, 1.0 - self.beta2, out=num)
            num *= g
            v += num
            np.divide(m, bias1, out=num)
            num *= self.lr
            np.divide(v, bias2, out=den)
            np.sqrt(den, out=den)
            den += self.eps
            num /= den
            p -= num
