"""Surrogate models over assembly flow fields.

Four networks on the in-repo autodiff engine: a residual dilated 3D
inpainting net with observed-value copy-through, an LSTM forecaster over
the flattened valid-cell vector, a ConvLSTM forecaster on the 15x15 grid,
and a DeepONet with branch/trunk nets merged by an inner product.  One
shared AdamW training loop with plateau scheduling and min-validation
checkpointing serves both tasks.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import rng
from .dataprep import MinMaxNorm, minmax_apply, minmax_invert
from .metrics import MetricReport, compute_metrics


class EmptyMask(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    """Training hit a non-finite loss; carries the last finite checkpoint."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class WindowTooLarge(UserWarning):
    pass


def _param(shape, seed, *tags, dtype=np.float32):
    return ad.init_conv_weight(shape, seed, *tags, dtype=dtype)


def _zeros(shape, dtype=np.float32):
    return ad.Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _ones(shape, dtype=np.float32):
    return ad.Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


# ---------------------------------------------------------------------------
# inpainting network

@dataclass
class InpaintNetConfig:
    channels: int = 64
    blocks: int = 6
    groups: int = 8
    dropout: float = 0.1
    in_channels: int = 3  # 5 with coordinate channels
    dilations: tuple = (1, 2, 4)  # in-plane cycle; axial dilation fixed at 1

    def to_dict(self):
        return {"channels": self.channels, "blocks": self.blocks,
                "groups": self.groups, "dropout": self.dropout,
                "in_channels": self.in_channels,
                "dilations": list(self.dilations)}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["dilations"] = tuple(d.get("dilations", (1, 2, 4)))
        return cls(**d)


class InpaintNet:
    """Stem conv -> B residual dilated 3D blocks -> 1x1x1 head.

    Block: conv - groupnorm - SiLU - dropout - conv - groupnorm, skip add,
    SiLU.  Axial dilation stays 1; in-plane dilation cycles through
    config.dilations so the lateral receptive field grows without
    distorting level-to-level alignment.
    """

    def __init__(self, config: InpaintNetConfig, seed: int,
                 dtype=np.float32):
        self.config = config
        self.seed = seed
        c = config.channels
        p = {}
        p["stem.w"] = _param((c, config.in_channels, 3, 3, 3), seed,
                             "stem", dtype=dtype)
        p["stem.b"] = _zeros((c,), dtype)
        for i in range(config.blocks):
            for conv_i in (1, 2):
                p[f"block{i}.conv{conv_i}.w"] = _param(
                    (c, c, 3, 3, 3), seed, "block", i, conv_i, dtype=dtype)
                p[f"block{i}.conv{conv_i}.b"] = _zeros((c,), dtype)
                p[f"block{i}.gn{conv_i}.gamma"] = _ones((c,), dtype)
                p[f"block{i}.gn{conv_i}.beta"] = _zeros((c,), dtype)
        p["head.w"] = _param((1, c, 1, 1, 1), seed, "head", dtype=dtype)
        p["head.b"] = _zeros((1,), dtype)
        self.params = p

    def raw_forward(self, x, training=False, dropout_seed=0):
        cfg = self.config
        p = self.params
        h = ad.conv(x, p["stem.w"], p["stem.b"], padding=1)
        for i in range(cfg.blocks):
            d = cfg.dilations[i % len(cfg.dilations)]
            pad = (1, d, d)
            dil = (1, d, d)
            r = h
            h = ad.conv(h, p[f"block{i}.conv1.w"], p[f"block{i}.conv1.b"],
                        padding=pad, dilation=dil)
            h = ad.group_norm(h, cfg.groups, p[f"block{i}.gn1.gamma"],
                              p[f"block{i}.gn1.beta"])
            h = ad.silu(h)
            h = ad.dropout(h, cfg.dropout, training,
                           rng.derive_key(dropout_seed, "drop", i))
            h = ad.conv(h, p[f"block{i}.conv2.w"], p[f"block{i}.conv2.b"],
                        padding=pad, dilation=dil)
            h = ad.group_norm(h, cfg.groups, p[f"block{i}.gn2.gamma"],
                              p[f"block{i}.gn2.beta"])
            h = ad.add(h, r)
            h = ad.silu(h)
        return ad.conv(h, p["head.w"], p["head.b"])


def inpaint_forward(net: InpaintNet, inputs, miss, training=False,
                    dropout_seed=0):
    """Copy-through prediction: observed values pass through bit-exactly.

    inputs is (N, C, L, H, W) with channel 0 = z * M_obs; miss is the
    (L, H, W) hidden mask.  Returns (N, 1, L, H, W).
    """
    x = inputs if isinstance(inputs, ad.Tensor) else ad.Tensor(inputs)
    raw = net.raw_forward(x, training=training, dropout_seed=dropout_seed)
    observed = ad.narrow(x, 1, 0, 1)
    miss_f = np.asarray(miss, dtype=raw.data.dtype)[None, None]
    return ad.add(observed, ad.mul(raw, ad.Tensor(miss_f)))


def masked_mse(pred, target, miss):
    """Mean squared error over hidden cells only."""
    miss = np.asarray(miss, dtype=bool)
    n_miss = int(miss.sum())
    if n_miss == 0:
        raise EmptyMask("missing mask selects no cells")
    pred = pred if isinstance(pred, ad.Tensor) else ad.Tensor(pred)
    target = target if isinstance(target, ad.Tensor) else ad.Tensor(target)
    m = np.zeros(pred.shape, dtype=pred.data.dtype)
    m[...] = np.broadcast_to(miss.astype(pred.data.dtype),
                             pred.shape[-miss.ndim:])
    n_sel = float(m.sum())
    diff = ad.mul(ad.sub(pred, target), ad.Tensor(m))
    return ad.mul(ad.tensor_sum(ad.mul(diff, diff)), 1.0 / n_sel)


# ---------------------------------------------------------------------------
# forecasters

@dataclass
class ForecasterConfig:
    kind: str = "convlstm"  # lstm | convlstm | deeponet
    hidden: int = 128
    n_valid: int = 193
    grid: tuple = (15, 15)

    def to_dict(self):
        return {"kind": self.kind, "hidden": self.hidden,
                "n_valid": self.n_valid, "grid": list(self.grid)}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["grid"] = tuple(d.get("grid", (15, 15)))
        return cls(**d)


def lstm_step(x, h, c, w_ih, w_hh, b_ih, b_hh, hidden):
    """One LSTM cell update; gates ordered i, f, o, g."""
    z = ad.add(ad.linear(x, w_ih, b_ih), ad.linear(h, w_hh, b_hh))
    i = ad.sigmoid(ad.narrow(z, -1, 0, hidden))
    f = ad.sigmoid(ad.narrow(z, -1, hidden, hidden))
    o = ad.sigmoid(ad.narrow(z, -1, 2 * hidden, hidden))
    g = ad.tanh(ad.narrow(z, -1, 3 * hidden, hidden))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def convlstm_cell_step(x, h, c, weight, bias, hidden):
    """ConvLSTM cell: gates from a 3x3 conv over [x, h]; i, f, o, g order.

    c' = sigmoid(f) * c + sigmoid(i) * tanh(g); h' = sigmoid(o) * tanh(c').
    """
    z = ad.conv(ad.concat([x, h], axis=1), weight, bias, padding=1)
    i = ad.sigmoid(ad.narrow(z, 1, 0, hidden))
    f = ad.sigmoid(ad.narrow(z, 1, hidden, hidden))
    o = ad.sigmoid(ad.narrow(z, 1, 2 * hidden, hidden))
    g = ad.tanh(ad.narrow(z, 1, 3 * hidden, hidden))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


class ForecasterLSTM:
    """Two stacked LSTM layers (hidden 128) plus a GELU projection head."""

    def __init__(self, config: ForecasterConfig, seed: int,
                 dtype=np.float32):
        self.config = config
        self.seed = seed
        hid = config.hidden
        n_in = config.n_valid
        p = {}
        for layer, d_in in ((0, n_in), (1, hid)):
            p[f"lstm{layer}.w_ih"] = _param((4 * hid, d_in), seed,
                                            "lstm", layer, "ih", dtype=dtype)
            p[f"lstm{layer}.w_hh"] = _param((4 * hid, hid), seed,
                                            "lstm", layer, "hh", dtype=dtype)
            p[f"lstm{layer}.b_ih"] = _zeros((4 * hid,), dtype)
            p[f"lstm{layer}.b_hh"] = _zeros((4 * hid,), dtype)
        p["head0.w"] = _param((hid, hid), seed, "head", 0, dtype=dtype)
        p["head0.b"] = _zeros((hid,), dtype)
        p["head1.w"] = _param((hid, hid), seed, "head", 1, dtype=dtype)
        p["head1.b"] = _zeros((hid,), dtype)
        p["out.w"] = _param((n_in, hid), seed, "head", "out", dtype=dtype)
        p["out.b"] = _zeros((n_in,), dtype)
        self.params = p

    def forward(self, x, training=False, dropout_seed=0):
        """x: (N, n_valid) one-step input; returns (N, n_valid)."""
        p = self.params
        hid = self.config.hidden
        n = x.shape[0]
        dtype = x.data.dtype if isinstance(x, ad.Tensor) else x.dtype
        x = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
        h = ad.Tensor(np.zeros((n, hid), dtype=dtype))
        c = ad.Tensor(np.zeros((n, hid), dtype=dtype))
        out = x
        for layer in range(2):
            h0 = ad.Tensor(np.zeros((n, hid), dtype=dtype))
            c0 = ad.Tensor(np.zeros((n, hid), dtype=dtype))
            h, c = lstm_step(out, h0, c0, p[f"lstm{layer}.w_ih"],
                             p[f"lstm{layer}.w_hh"], p[f"lstm{layer}.b_ih"],
                             p[f"lstm{layer}.b_hh"], hid)
            out = h
        out = ad.gelu(ad.linear(out, p["head0.w"], p["head0.b"]))
        out = ad.gelu(ad.linear(out, p["head1.w"], p["head1.b"]))
        return ad.linear(out, p["out.w"], p["out.b"])


class ForecasterConvLSTM:
    """Two ConvLSTM layers (128 channels, 3x3 kernels) on the 15x15 grid.

    Input carries the masked field (invalid cells zero) and the geometry
    mask as a second channel; a 3x3 conv maps the final hidden state to
    one output channel.
    """

    def __init__(self, config: ForecasterConfig, seed: int,
                 dtype=np.float32):
        self.config = config
        self.seed = seed
        hid = config.hidden
        p = {}
        for layer, c_in in ((0, 2), (1, hid)):
            p[f"cell{layer}.w"] = _param((4 * hid, c_in + hid, 3, 3), seed,
                                         "convlstm", layer, dtype=dtype)
            p[f"cell{layer}.b"] = _zeros((4 * hid,), dtype)
        p["out.w"] = _param((1, hid, 3, 3), seed, "convlstm", "out",
                            dtype=dtype)
        p["out.b"] = _zeros((1,), dtype)
        self.params = p

    def forward(self, x, training=False, dropout_seed=0):
        """x: (N, 2, H, W); returns (N, 1, H, W)."""
        p = self.params
        hid = self.config.hidden
        x = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
        n, _, hh, ww = x.shape
        dtype = x.data.dtype
        out = x
        for layer in range(2):
            h = ad.Tensor(np.zeros((n, hid, hh, ww), dtype=dtype))
            c = ad.Tensor(np.zeros((n, hid, hh, ww), dtype=dtype))
            h, c = convlstm_cell_step(out, h, c, p[f"cell{layer}.w"],
                                      p[f"cell{layer}.b"], hid)
            out = h
        return ad.conv(out, p["out.w"], p["out.b"], padding=1)


class ForecasterDeepONet:
    """Branch/trunk nets (hidden 128 and 256, GELU) merged by an inner
    product over 128 latent units, evaluated at the valid coordinates."""

    def __init__(self, config: ForecasterConfig, seed: int, coords=None,
                 dtype=np.float32):
        self.config = config
        self.seed = seed
        n_in = config.n_valid
        latent = config.hidden
        p = {}
        for name, d_in in (("branch", n_in), ("trunk", 2)):
            p[f"{name}0.w"] = _param((128, d_in), seed, name, 0, dtype=dtype)
            p[f"{name}0.b"] = _zeros((128,), dtype)
            p[f"{name}1.w"] = _param((256, 128), seed, name, 1, dtype=dtype)
            p[f"{name}1.b"] = _zeros((256,), dtype)
            p[f"{name}2.w"] = _param((latent, 256), seed, name, 2,
                                     dtype=dtype)
            p[f"{name}2.b"] = _zeros((latent,), dtype)
        p["bias"] = _zeros((1,), dtype)
        self.params = p
        self.coords = (np.asarray(coords, dtype=dtype) if coords is not None
                       else None)

    @staticmethod
    def grid_coords(geom_mask, dtype=np.float32):
        """Normalized (row+0.5)/15, (col+0.5)/15 of the valid cells."""
        rr, cc = np.nonzero(np.asarray(geom_mask, dtype=bool))
        h, w = np.asarray(geom_mask).shape
        return np.stack([(rr + 0.5) / h, (cc + 0.5) / w],
                        axis=1).astype(dtype)

    def _mlp(self, x, name):
        p = self.params
        h = ad.gelu(ad.linear(x, p[f"{name}0.w"], p[f"{name}0.b"]))
        h = ad.gelu(ad.linear(h, p[f"{name}1.w"], p[f"{name}1.b"]))
        return ad.linear(h, p[f"{name}2.w"], p[f"{name}2.b"])

    def forward(self, x, training=False, dropout_seed=0):
        """x: (N, n_valid) field at t; returns (N, n_valid) at t+1."""
        if self.coords is None:
            raise ValueError("DeepONet needs trunk coordinates")
        x = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
        latent = self.config.hidden
        branch = self._mlp(x, "branch")  # (N, latent)
        trunk = self._mlp(ad.Tensor(self.coords), "trunk")  # (M, latent)
        if branch.shape[-1] != trunk.shape[-1]:
            raise ad.ShapeMismatch(
                f"latent widths differ: branch {branch.shape[-1]} vs "
                f"trunk {trunk.shape[-1]}")
        out = ad.matmul(branch, ad.transpose2(trunk))
        return ad.add(out, self.params["bias"])


def build_forecaster(config: ForecasterConfig, seed: int, geom_mask=None,
                     dtype=np.float32):
    if config.kind == "lstm":
        return ForecasterLSTM(config, seed, dtype=dtype)
    if config.kind == "convlstm":
        return ForecasterConvLSTM(config, seed, dtype=dtype)
    if config.kind == "deeponet":
        coords = (ForecasterDeepONet.grid_coords(geom_mask, dtype)
                  if geom_mask is not None else None)
        return ForecasterDeepONet(config, seed, coords=coords, dtype=dtype)
    raise ValueError(f"unknown forecaster kind {config.kind!r}")


# ---------------------------------------------------------------------------
# forecasting data containers

@dataclass
class ForecastData:
    """One layer of assembly flow arranged for one-step prediction."""

    layer: int
    geom_mask: np.ndarray
    norm: MinMaxNorm  # per valid-cell feature, fitted on train steps
    z_valid: np.ndarray  # (T, n_valid) normalized valid-cell vectors
    splits: dict  # name -> range of time indices


def make_forecast_data(dataset, layer, fractions=(0.6, 0.2, 0.2)):
    from .dataprep import minmax_fit, split_sequential

    geom = dataset.geom_mask
    values = dataset.values[:, layer][:, geom].astype(np.float64)  # (T, M)
    tr, va, te = split_sequential(dataset.n_steps, fractions)
    if len(tr) < 2:
        raise ValueError("training split too short for one-step pairs")
    norm = minmax_fit(values[np.fromiter(tr, int)])
    z = minmax_apply(values, norm).astype(np.float32)
    return ForecastData(layer=layer, geom_mask=geom, norm=norm, z_valid=z,
                        splits={"train": tr, "val": va, "test": te})


def _grid_batch(data: ForecastData, z_rows):
    """(N, 2, H, W) masked field + geometry channel for ConvLSTM."""
    geom = data.geom_mask
    n = z_rows.shape[0]
    h, w = geom.shape
    grid = np.zeros((n, 2, h, w), dtype=np.float32)
    grid[:, 0, geom] = z_rows
    grid[:, 1] = geom.astype(np.float32)
    return grid


def forecast_pairs(data: ForecastData, split: str):
    """(input indices, target indices) for one-step pairs inside a split."""
    r = data.splits[split]
    idx = np.fromiter(r, dtype=np.int64)
    if len(idx) < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return idx[:-1], idx[1:]


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    min_lr: float = 1e-5
    seed: int = 0

    def to_dict(self):
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "lr": self.lr, "weight_decay": self.weight_decay,
                "betas": list(self.betas),
                "plateau_factor": self.plateau_factor,
                "plateau_patience": self.plateau_patience,
                "min_lr": self.min_lr, "seed": self.seed}


@dataclass
class TrainResult:
    best_params: dict  # name -> ndarray snapshot of the best epoch
    best_epoch: int  # 1-based; 0 when no epochs ran
    curves: list  # (epoch, train_loss, val_loss, lr)
    final_params: dict
    aborted: bool = False


def _snapshot(params):
    return {k: np.array(v.data, copy=True) for k, v in params.items()}


def _restore(model, snapshot):
    for k, v in snapshot.items():
        model.params[k].data = np.array(v, copy=True)


def train_model(model, forward_loss, n_train, val_loss_fn,
                config: TrainConfig) -> TrainResult:
    """Generic AdamW loop: forward_loss(indices, epoch, batch) gives the
    batch loss tensor; val_loss_fn() the scalar validation loss."""
    opt = ad.OptimState(lr=config.lr, betas=tuple(config.betas),
                        weight_decay=config.weight_decay)
    sched = ad.PlateauScheduler(config.lr, factor=config.plateau_factor,
                                patience=config.plateau_patience,
                                min_lr=config.min_lr)
    curves = []
    best = None
    best_epoch = 0
    best_val = np.inf
    if config.epochs == 0 or n_train == 0:
        return TrainResult(best_params=_snapshot(model.params),
                           best_epoch=0, curves=[],
                           final_params=_snapshot(model.params))
    last_finite = _snapshot(model.params)
    for epoch in range(1, config.epochs + 1):
        order = rng.generator(config.seed, "shuffle", epoch).permutation(
            n_train)
        losses = []
        for b_i in range(0, n_train, config.batch_size):
            batch_idx = order[b_i:b_i + config.batch_size]
            loss = forward_loss(batch_idx, epoch, b_i)
            value = float(loss.data)
            if not np.isfinite(value):
                result = TrainResult(
                    best_params=best or last_finite, best_epoch=best_epoch,
                    curves=curves, final_params=last_finite, aborted=True)
                raise NonFiniteLoss(
                    f"non-finite training loss at epoch {epoch}", result)
            losses.append(value)
            for p in model.params.values():
                p.zero_grad()
            loss.backward()
            opt.lr = sched.lr
            ad.adamw_step(model.params, opt)
        val = float(val_loss_fn())
        if not np.isfinite(val):
            result = TrainResult(
                best_params=best or last_finite, best_epoch=best_epoch,
                curves=curves, final_params=last_finite, aborted=True)
            raise NonFiniteLoss(
                f"non-finite validation loss at epoch {epoch}", result)
        last_finite = _snapshot(model.params)
        if val < best_val:
            best_val = val
            best = last_finite
            best_epoch = epoch
        lr_now = sched.step(val)
        curves.append((epoch, float(np.mean(losses)), val, lr_now))
    return TrainResult(best_params=best if best is not None else last_finite,
                       best_epoch=best_epoch, curves=curves,
                       final_params=last_finite)


def write_curves_csv(curves, path):
    with open(path, "w") as f:
        f.write("epoch,train_loss,val_loss,lr\n")
        for epoch, tr, va, lr in curves:
            f.write(f"{epoch},{tr:.9g},{va:.9g},{lr:.9g}\n")


def train_inpainter(net: InpaintNet, sample_sets, config: TrainConfig
                    ) -> TrainResult:
    """sample_sets: dict of InpaintSampleSet split by train/val."""
    train_set = sample_sets["train"]
    val_set = sample_sets["val"]
    if int(train_set.miss.sum()) == 0:
        raise EmptyMask("checkerboard mask hides no cells")

    def forward_loss(batch_idx, epoch, batch_tag):
        x = ad.Tensor(train_set.inputs[batch_idx])
        y = ad.Tensor(train_set.targets[batch_idx])
        pred = inpaint_forward(
            net, x, train_set.miss, training=True,
            dropout_seed=rng.derive_key(config.seed, "ep", epoch,
                                        batch_tag))
        return masked_mse(pred, y, train_set.miss)

    def val_loss():
        total = 0.0
        count = 0
        for lo in range(0, len(val_set), 64):
            sel = slice(lo, lo + 64)
            pred = inpaint_forward(net, ad.Tensor(val_set.inputs[sel]),
                                   val_set.miss)
            loss = masked_mse(pred, ad.Tensor(val_set.targets[sel]),
                              val_set.miss)
            n = val_set.inputs[sel].shape[0]
            total += float(loss.data) * n
            count += n
        return total / max(count, 1)

    return train_model(net, forward_loss, len(train_set), val_loss, config)


def train_forecaster(model, data: ForecastData, config: TrainConfig
                     ) -> TrainResult:
    xs, ys = forecast_pairs(data, "train")
    vxs, vys = forecast_pairs(data, "val")
    is_grid = isinstance(model, ForecasterConvLSTM)
    geom = data.geom_mask
    geom_f = geom.astype(np.float32)
    n_valid = int(geom.sum())

    def batch_loss(z_in, z_out, epoch=0, tag=0, training=False):
        if is_grid:
            x = ad.Tensor(_grid_batch(data, z_in))
            y = z_out
            pred = model.forward(x, training=training,
                                 dropout_seed=rng.derive_key(
                                     config.seed, "ep", epoch, tag))
            pred_valid = ad.masked_select(
                ad.reshape(pred, (pred.shape[0],) + geom.shape),
                np.broadcast_to(geom, (pred.shape[0],) + geom.shape))
            diff = ad.sub(pred_valid, ad.Tensor(y.reshape(-1)))
        else:
            pred = model.forward(ad.Tensor(z_in), training=training,
                                 dropout_seed=rng.derive_key(
                                     config.seed, "ep", epoch, tag))
            diff = ad.sub(pred, ad.Tensor(z_out))
        return ad.tensor_mean(ad.mul(diff, diff))

    def forward_loss(batch_idx, epoch, tag):
        return batch_loss(data.z_valid[xs[batch_idx]],
                          data.z_valid[ys[batch_idx]], epoch, tag,
                          training=True)

    def val_loss():
        if len(vxs) == 0:
            return float("inf")
        total = 0.0
        for lo in range(0, len(vxs), 256):
            sel = slice(lo, lo + 256)
            n = len(vxs[sel])
            loss = batch_loss(data.z_valid[vxs[sel]], data.z_valid[vys[sel]])
            total += float(loss.data) * n
        return total / len(vxs)

    return train_model(model, forward_loss, len(xs), val_loss, config)


# ---------------------------------------------------------------------------
# evaluation

def evaluate_one_step(model, data: ForecastData, window: int = 2000,
                      batch: int = 256):
    """Teacher-forced one-step metrics over the last `window` test steps.

    Predictions are de-normalized before metrics; returns a MetricReport
    with the per-assembly MAPE map and per-layer box statistics.
    """
    xs, ys = forecast_pairs(data, "test")
    if len(xs) == 0:
        raise ValueError("test split provides no one-step pairs")
    if window > len(xs):
        warnings.warn(f"window {window} larger than the {len(xs)}-pair test "
                      "split; clipping", WindowTooLarge, stacklevel=2)
        window = len(xs)
    xs = xs[-window:]
    ys = ys[-window:]
    is_grid = isinstance(model, ForecasterConvLSTM)
    geom = data.geom_mask
    preds = np.empty((len(xs), data.z_valid.shape[1]), dtype=np.float64)
    for lo in range(0, len(xs), batch):
        sel = slice(lo, lo + batch)
        z_in = data.z_valid[xs[sel]]
        if is_grid:
            out = model.forward(ad.Tensor(_grid_batch(data, z_in)))
            preds[sel] = out.data[:, 0][:, geom]
        else:
            preds[sel] = model.forward(ad.Tensor(z_in)).data
    truth = minmax_invert(data.z_valid[ys].astype(np.float64), data.norm)
    pred_phys = minmax_invert(preds, data.norm)

    h, w = geom.shape
    full_pred = np.zeros((len(xs), h, w))
    full_truth = np.zeros((len(xs), h, w))
    full_pred[:, geom] = pred_phys
    full_truth[:, geom] = truth
    return compute_metrics(full_pred, full_truth, geom, per_cell=True,
                           per_layer=True)


def evaluate_inpainting(net: InpaintNet, sample_set, norm, batch: int = 64):
    """Per-plane metrics over intentionally hidden cells, de-normalized."""
    from .dataprep import zscore_invert

    n = len(sample_set)
    n_levels = sample_set.inputs.shape[2]
    preds = np.empty((n, n_levels) + sample_set.inputs.shape[3:],
                     dtype=np.float64)
    for lo in range(0, n, batch):
        sel = slice(lo, lo + batch)
        out = inpaint_forward(net, ad.Tensor(sample_set.inputs[sel]),
                              sample_set.miss)
        preds[sel] = out.data[:, 0]
    targets = sample_set.targets[:, 0].astype(np.float64)
    pred_phys = np.stack([zscore_invert(p, norm) for p in preds])
    truth_phys = np.stack([zscore_invert(t, norm) for t in targets])
    miss2d = sample_set.miss[0].astype(bool)
    reports = {}
    for lev in range(n_levels):
        reports[lev] = compute_metrics(pred_phys[:, lev], truth_phys[:, lev],
                                       miss2d, per_cell=True)
    aggregate = compute_metrics(pred_phys, truth_phys, miss2d,
                                per_layer=True)
    return aggregate, reports


# ---------------------------------------------------------------------------
# checkpoints

def save_model(path, model, extra_sidecar=None):
    sidecar = {"seed": getattr(model, "seed", None)}
    if isinstance(model, InpaintNet):
        sidecar["arch"] = {"type": "inpaint", **model.config.to_dict()}
    else:
        sidecar["arch"] = {"type": model.config.kind,
                           **model.config.to_dict()}
    if extra_sidecar:
        sidecar.update(extra_sidecar)
    ad.save_checkpoint(path, model.params, sidecar)


def load_model(path, geom_mask=None):
    params, sidecar = ad.load_checkpoint(path)
    arch = (sidecar or {}).get("arch", {})
    kind = arch.get("type", "inpaint")
    seed = (sidecar or {}).get("seed") or 0
    arch = {k: v for k, v in arch.items() if k != "type"}
    if kind == "inpaint":
        model = InpaintNet(InpaintNetConfig.from_dict(arch), seed)
    else:
        model = build_forecaster(ForecasterConfig.from_dict(arch), seed,
                                 geom_mask=geom_mask)
    for name, value in params.items():
        if name not in model.params:
            raise ad.ShapeMismatch(f"checkpoint entry {name} not in model")
        if tuple(model.params[name].shape) != tuple(value.shape):
            raise ad.ShapeMismatch(
                f"checkpoint entry {name} has shape {value.shape}, "
                f"model expects {model.params[name].shape}")
        model.params[name].data = value.astype(np.float32).copy()
    return model, sidecar
