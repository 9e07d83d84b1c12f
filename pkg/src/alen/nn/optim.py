"""Adam with bias correction, plus signed application of a shared update.

The adversarial stage needs one set of update deltas applied with opposite
signs to two networks, so the step computation is split out: ``compute_deltas``
advances the optimizer state and returns descent deltas; callers add them
(scaled however they need) to the parameter arrays.
"""

from __future__ import annotations

import numpy as np

from alen.exceptions import ShapeError


class Adam:
    """Tracks first/second moment estimates per named parameter."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def compute_deltas(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Advance the moments one step and return descent deltas.

        delta = -lr * m_hat / (sqrt(v_hat) + eps); adding delta to a
        parameter performs the usual minimizing step.
        """
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        deltas: dict[str, np.ndarray] = {}
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            if self.m[name].shape != g.shape:
                raise ShapeError(f"gradient for '{name}' changed shape")
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            deltas[name] = -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return deltas

    def state_dict(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "step": self.step_count,
            "m": {k: v.ravel().tolist() for k, v in self.m.items()},
            "v": {k: v.ravel().tolist() for k, v in self.v.items()},
        }

    @classmethod
    def from_state_dict(cls, state: dict,
                        shapes: dict[str, tuple] | None = None) -> "Adam":
        opt = cls(lr=state["lr"], beta1=state["beta1"],
                  beta2=state["beta2"], eps=state["eps"])
        opt.step_count = int(state["step"])
        for key in ("m", "v"):
            for name, flat in state.get(key, {}).items():
                arr = np.asarray(flat, dtype=np.float64)
                if shapes and name in shapes:
                    arr = arr.reshape(shapes[name])
                getattr(opt, key)[name] = arr
        return opt


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              opt: Adam) -> None:
    """Standard minimizing step: params += deltas."""
    for name, delta in opt.compute_deltas(grads).items():
        params[name] += delta


def apply_signed_update(params: dict[str, np.ndarray],
                        deltas: dict[str, np.ndarray], sign: float) -> None:
    """params += sign * deltas for every named delta present in params."""
    for name, delta in deltas.items():
        if name in params:
            params[name] += sign * delta
