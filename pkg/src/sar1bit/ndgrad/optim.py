"""AdamW optimizer with decoupled weight decay and per-group learning rates."""

from __future__ import annotations

import numpy as np

from .tensor import TapeError, Tensor


class AdamW:
    """Standard AdamW over named parameters.

    ``groups`` is a list of (params, lr) pairs where ``params`` is a dict
    of name -> Tensor; distinct groups may use different learning rates
    (used for backbone-vs-head differential rates during fine-tuning).
    Gradients are cleared after each step.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.groups: list[tuple[dict[str, Tensor], float]] = [(dict(params), float(lr))]
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._init_state(self.groups[0][0])

    def _init_state(self, params: dict[str, Tensor]):
        for name, p in params.items():
            self._m[name] = np.zeros_like(p.data)
            self._v[name] = np.zeros_like(p.data)

    def add_group(self, params: dict[str, Tensor], lr: float):
        self.groups.append((dict(params), float(lr)))
        self._init_state(params)

    def set_lr(self, lr: float, group: int = 0):
        params, _ = self.groups[group]
        self.groups[group] = (params, float(lr))

    def step(self):
        """One AdamW update; raises if any parameter is missing its gradient."""
        self.step_count += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for params, lr in self.groups:
            for name, p in params.items():
                if p.grad is None:
                    raise TapeError(f"adamw_step: parameter '{name}' has no gradient")
                g = p.grad
                m = self._m[name]
                v = self._v[name]
                if m.shape != p.data.shape:
                    raise TapeError(f"adamw_step: state shape mismatch for '{name}'")
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * (g * g)
                mhat = m / bc1
                vhat = v / bc2
                update = mhat / (np.sqrt(vhat) + self.eps)
                if self.weight_decay:
                    update = update + self.weight_decay * p.data
                p.data -= (lr * update).astype(p.data.dtype)
                p.grad = None

    # -- state round-trip (persisted inside checkpoints) ----------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"opt.step": np.array([self.step_count], dtype=np.float64)}
        for name in self._m:
            out[f"opt.m.{name}"] = self._m[name]
            out[f"opt.v.{name}"] = self._v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.step_count = int(arrays["opt.step"][0])
        for name in self._m:
            self._m[name] = arrays[f"opt.m.{name}"].astype(self._m[name].dtype, copy=True)
            self._v[name] = arrays[f"opt.v.{name}"].astype(self._v[name].dtype, copy=True)
