"""Training loop: window sampling, augmentation, Adam, LR schedule.

Each epoch draws one random window per training sequence from inside the
ROI, augments it, normalizes it and regresses the label in kPa with an MSE
loss. The learning rate holds for 150 epochs and halves every 50 after
that. The returned model is the checkpoint with the lowest validation
loss; everything is deterministic for a fixed seed.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from ..errors import EmptyDatasetError
from ..fields import extract_window, normalize_window, window_margin
from . import layers as L
from .network import ArchSpec, ModelParams, init_params, net_backward, net_forward

# Training crop region: interior box of the field of view (depth x lateral
# pixels), clamped to the valid window-center area on small grids.
DEFAULT_ROI = (121, 181)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

FINETUNE_EPOCHS = 10
BLUR_SIGMA_RANGE = (0.3, 1.0)
ERASE_MAX_AREA = 0.25


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    batch: int = 250
    lr: float = 1e-4
    lr_hold_epochs: int = 150
    lr_halve_every: int = 50
    seed: int = 0
    hflip: bool = True
    vflip: bool = True
    rot90s: bool = True
    gaussian_blur: bool = True
    random_erasing: bool = True
    roi: tuple = DEFAULT_ROI

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or self.lr <= 0:
            raise ValueError("hyperparameters must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index."""
        if epoch <= self.lr_hold_epochs:
            return self.lr
        halvings = 1 + (epoch - self.lr_hold_epochs - 1) // self.lr_halve_every
        return self.lr / (2.0**halvings)

    @property
    def final_lr(self) -> float:
        last = self.lr_at(max(self.epochs, self.lr_hold_epochs + 1))
        return last


def augment_window(data, rng, cfg: TrainConfig = TrainConfig()):
    """Spatial-only augmentation of a (hs, ws, t) window.

    Flips, 90-degree rotations (square windows), Gaussian blur and random
    rectangle erasing are each applied independently with probability 0.5.
    The time axis is never transformed.
    """
    out = np.asarray(data)
    if cfg.hflip and rng.random() < 0.5:
        out = out[:, ::-1, :]
    if cfg.vflip and rng.random() < 0.5:
        out = out[::-1, :, :]
    if cfg.rot90s and rng.random() < 0.5:
        k = int(rng.integers(1, 4))
        if out.shape[0] != out.shape[1]:
            raise ValueError("rotations need square spatial windows")
        out = np.rot90(out, k=k, axes=(0, 1))
    if cfg.gaussian_blur and rng.random() < 0.5:
        sigma = rng.uniform(*BLUR_SIGMA_RANGE)
        out = ndimage.gaussian_filter(np.ascontiguousarray(out), sigma=(sigma, sigma, 0.0))
    if cfg.random_erasing and rng.random() < 0.5:
        hs, ws = out.shape[:2]
        max_area = ERASE_MAX_AREA * hs * ws
        eh = int(rng.integers(1, hs + 1))
        ew_cap = max(1, min(ws, int(max_area / eh)))
        ew = int(rng.integers(1, ew_cap + 1))
        r0 = int(rng.integers(0, hs - eh + 1))
        c0 = int(rng.integers(0, ws - ew + 1))
        out = np.ascontiguousarray(out).copy()
        out[r0 : r0 + eh, c0 : c0 + ew, :] = 0.0
    return np.ascontiguousarray(out)


def _roi_center_bounds(geom, window_size, roi):
    """Valid window-center ranges: ROI box clamped to the margin region."""
    m = window_margin(window_size)
    roi_d = min(roi[0], geom.depth_px)
    roi_l = min(roi[1], geom.lateral_px)
    r0 = (geom.depth_px - roi_d) // 2
    c0 = (geom.lateral_px - roi_l) // 2
    lo_r = max(r0, m)
    hi_r = min(r0 + roi_d - 1, geom.depth_px - 1 - m)
    lo_c = max(c0, m)
    hi_c = min(c0 + roi_l - 1, geom.lateral_px - 1 - m)
    if lo_r > hi_r or lo_c > hi_c:
        raise ValueError(
            f"window of {window_size} px does not fit inside the ROI of "
            f"{geom.depth_px}x{geom.lateral_px} grid"
        )
    return lo_r, hi_r, lo_c, hi_c


def _sample_batch(records, arch, cfg, rng, augment=True):
    """One normalized window per record, with its label in kPa."""
    xs = np.empty(
        (len(records), arch.window_size, arch.window_size, records[0].sequence.frames),
        dtype=np.float32,
    )
    ys = np.empty(len(records), dtype=np.float32)
    for i, rec in enumerate(records):
        seq = rec.sequence
        lo_r, hi_r, lo_c, hi_c = _roi_center_bounds(seq.geom, arch.window_size, cfg.roi)
        r = int(rng.integers(lo_r, hi_r + 1))
        c = int(rng.integers(lo_c, hi_c + 1))
        w = extract_window(seq, (r, c), arch.window_size)
        data = w.data
        if augment:
            data = augment_window(data, rng, cfg)
        data = normalize_window(replace(w, data=np.ascontiguousarray(data))).data
        xs[i] = data.astype(np.float32)
        ys[i] = rec.label_at(r, c) / 1000.0
    return xs, ys


def adam_step(params: ModelParams, grads, lr):
    """In-place Adam update with bias correction."""
    params.step += 1
    t = params.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for name, g in grads.items():
        p = params.tensors[name]
        g = np.asarray(g, dtype=p.dtype)
        if name not in params.adam_m:
            params.adam_m[name] = np.zeros_like(p)
            params.adam_v[name] = np.zeros_like(p)
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)).astype(p.dtype)


def _epoch_pass(params, records, cfg, rng, lr, augment=True):
    """One optimization epoch: sample, batch, update. Returns mean loss."""
    order = rng.permutation(len(records))
    total = 0.0
    for start in range(0, len(records), cfg.batch):
        chunk = [records[i] for i in order[start : start + cfg.batch]]
        xs, ys = _sample_batch(chunk, params.arch, cfg, rng, augment=augment)
        pred, caches = net_forward(params, xs, training=True)
        loss, dpred = L.mse_loss(pred, ys.astype(pred.dtype))
        grads = net_backward(params, caches, dpred)
        adam_step(params, grads, lr)
        total += loss * len(chunk)
    return total / len(records)


def _eval_loss(params, xs, ys):
    pred, _ = net_forward(params, xs, training=False)
    loss, _ = L.mse_loss(pred, ys.astype(pred.dtype))
    return loss


def train(records, arch: ArchSpec, cfg: TrainConfig, val_records=None):
    """Train from scratch; returns (best params, per-epoch history).

    History rows carry epoch, learning rate, train loss and validation
    loss (NaN without a validation set). The returned parameters are the
    epoch checkpoint with the lowest validation loss, or the final state
    when no validation data is given.
    """
    records = list(records)
    if not records:
        raise EmptyDatasetError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(arch, seed=int(rng.integers(2**31)))
    history = []

    val_xs = val_ys = None
    if val_records:
        val_rng = np.random.default_rng(cfg.seed + 1)
        val_xs, val_ys = _sample_batch(list(val_records), arch, cfg, val_rng, augment=False)
    best = params.copy()
    best_val = math.inf

    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr_at(epoch)
        train_loss = _epoch_pass(params, records, cfg, rng, lr)
        val_loss = math.nan
        if val_xs is not None:
            val_loss = _eval_loss(params, val_xs, val_ys)
            if val_loss < best_val:
                best_val = val_loss
                best = params.copy()
        history.append(
            {"epoch": epoch, "lr": lr, "train_loss": train_loss, "val_loss": val_loss}
        )
    if val_xs is None:
        best = params
    return best, history


def finetune(params: ModelParams, records, epochs: int = FINETUNE_EPOCHS, cfg: TrainConfig | None = None):
    """Refine a trained model on per-pixel labeled (inhomogeneous) data.

    Labels are read from each record's elasticity map at the sampled
    window center. The learning rate is pinned to the schedule's final
    value; 0 epochs returns the parameters untouched.
    """
    records = list(records)
    if not records:
        raise EmptyDatasetError("fine-tuning set is empty")
    if cfg is None:
        cfg = TrainConfig()
    if epochs == 0:
        return params, []
    rng = np.random.default_rng(cfg.seed + 2)
    lr = cfg.final_lr
    history = []
    for epoch in range(1, epochs + 1):
        loss = _epoch_pass(params, records, cfg, rng, lr)
        history.append({"epoch": epoch, "lr": lr, "train_loss": loss, "val_loss": math.nan})
    return params, history
