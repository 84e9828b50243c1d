"""AdamW with decoupled weight decay, plateau LR scheduling, grad checking."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeMismatch, Tensor


@dataclass
class OptimState:
    """Per-parameter moment accumulators plus the shared hyperparameters."""

    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {"lr": self.lr, "betas": list(self.betas), "eps": self.eps,
                "weight_decay": self.weight_decay, "step": self.step}


def adamw_step(params: dict, state: OptimState):
    """One AdamW update over named parameters using their .grad fields.

    Weight decay is decoupled: params shrink by lr*wd before the
    bias-corrected moment update.  Parameters with grad None are skipped.
    """
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"grad shape {g.shape} vs param {p.data.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        if state.weight_decay:
            p.data -= state.lr * state.weight_decay * p.data
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class PlateauScheduler:
    """Multiply lr by `factor` when the best val loss stalls for `patience`
    epochs; never drops below min_lr."""

    def __init__(self, lr, factor=0.5, patience=5, min_lr=1e-5):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 < factor < 1.0:
            raise ValueError("factor must be in (0, 1)")
        self.lr = float(lr)
        self.factor = float(factor)
        self.patience = int(patience)
        self.min_lr = float(min_lr)
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = float(val_loss)
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr

    def snapshot(self) -> dict:
        return {"lr": self.lr, "factor": self.factor,
                "patience": self.patience, "min_lr": self.min_lr,
                "best": None if np.isinf(self.best) else self.best,
                "bad_epochs": self.bad_epochs}


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_input: list
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(op, inputs, tolerance=1e-5, probe_seed=0):
    """Compare backward gradients against central finite differences.

    op maps the input tensors to one output tensor; the probe scalar is
    sum(output * r) for a fixed random r so every output element
    contributes.  Inputs must be float64 for the differences to resolve.
    """
    from .. import rng

    inputs = [t if isinstance(t, Tensor) else Tensor(t, requires_grad=True)
              for t in inputs]
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 tensors")
        t.requires_grad = True
        t.grad = None

    gen = rng.generator(probe_seed, "gradcheck-probe")
    out = op(*inputs)
    r = gen.standard_normal(out.shape)
    (out * Tensor(r)).sum().backward()
    analytic = [np.array(t.grad, copy=True) if t.grad is not None
                else np.zeros_like(t.data) for t in inputs]

    def probe():
        return float((op(*inputs).data * r).sum())

    per_input = []
    for t_i, t in enumerate(inputs):
        fd = np.zeros_like(t.data)
        flat = t.data.ravel()
        fd_flat = fd.ravel()
        for j in range(flat.size):
            x0 = flat[j]
            h = 1e-5 * max(1.0, abs(x0))
            flat[j] = x0 + h
            fp = probe()
            flat[j] = x0 - h
            fm = probe()
            flat[j] = x0
            fd_flat[j] = (fp - fm) / (2.0 * h)
        a = analytic[t_i]
        scale = max(np.abs(a).max(initial=0.0), np.abs(fd).max(initial=0.0),
                    1e-8)
        per_input.append(float(np.abs(a - fd).max(initial=0.0) / scale))
    return GradCheckReport(max_rel_err=max(per_input), per_input=per_input,
                           tolerance=tolerance)
