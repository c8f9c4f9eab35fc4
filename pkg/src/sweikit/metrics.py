"""Evaluation metrics, cross-validation splits and throughput benchmarks."""

import time
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, GeometryMismatchError, TooFewPositionsError
from .fields import ElasticityMap

# Pushes held out of every training set, mirroring the outermost
# push locations of the seven-push acquisition layout.
EXCLUDED_PUSHES = (1, 7)


def mae(pred: ElasticityMap, truth: ElasticityMap, mask=None):
    """Pixelwise mean absolute error over present masked pixels.

    Returns (mean Pa, std Pa, present_fraction): missing prediction pixels
    are excluded from the error and reported via the present fraction.
    """
    if pred.geom != truth.geom:
        raise GeometryMismatchError("prediction and truth grids differ")
    p = np.asarray(pred.values, dtype=np.float64)
    t = np.asarray(truth.values, dtype=np.float64)
    if mask is None:
        mask = np.ones(p.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != p.shape:
            raise GeometryMismatchError("mask shape differs from grid")
    if not mask.any():
        raise EmptyMaskError("mask selects no pixels")
    present = np.isfinite(p) & mask
    fraction = float(present.sum() / mask.sum())
    if not present.any():
        return float("nan"), float("nan"), 0.0
    err = np.abs(p[present] - t[present])
    return float(err.mean()), float(err.std()), fraction


def std_map(preds) -> ElasticityMap:
    """Per-pixel population std across maps; missing anywhere stays missing."""
    preds = list(preds)
    if len(preds) < 2:
        raise ValueError("need at least two maps")
    geom = preds[0].geom
    for m in preds:
        if m.geom != geom:
            raise GeometryMismatchError("maps live on different grids")
    stack = np.stack([np.asarray(m.values, dtype=np.float64) for m in preds])
    out = stack.std(axis=0)
    out[~np.isfinite(stack).all(axis=0)] = np.nan
    return ElasticityMap(geom=geom, values=out, units=preds[0].units)


def dice(pred: ElasticityMap, truth_mask, threshold: float) -> float:
    """Overlap of the thresholded prediction with a binary inclusion mask.

    Pixels at or above the threshold count as inclusion; missing
    predictions count as background (they fail to detect). Two empty sets
    are a perfect match by convention.
    """
    truth = np.asarray(truth_mask, dtype=bool)
    if truth.shape != pred.geom.shape:
        raise GeometryMismatchError("truth mask shape differs from grid")
    p = np.asarray(pred.values, dtype=np.float64)
    binarized = np.isfinite(p) & (p >= threshold)
    inter = np.logical_and(binarized, truth).sum()
    total = binarized.sum() + truth.sum()
    if total == 0:
        return 1.0
    return float(2.0 * inter / total)


def dice_sweep(pred: ElasticityMap, truth_mask, thresholds):
    """Dice evaluated at each threshold; returns a list of (threshold, dice)."""
    return [(float(t), dice(pred, truth_mask, float(t))) for t in thresholds]


def mean_threshold(background_e: float, inclusion_e: float) -> float:
    """Binarization threshold: mean of background and inclusion moduli."""
    return 0.5 * (background_e + inclusion_e)


@dataclass(frozen=True)
class SplitPlan:
    """Fold assignments mapping (concentration, position) to a role."""

    mode: str
    folds: tuple  # per fold: {"train": [...], "val": [...], "test": [...]}
    excluded_pushes: tuple = EXCLUDED_PUSHES

    def role_of(self, fold: int, concentration, position) -> str:
        key = (concentration, position)
        for role in ("train", "val", "test"):
            if key in self.folds[fold][role]:
                return role
        raise KeyError(f"{key} not assigned in fold {fold}")

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "excluded_pushes": list(self.excluded_pushes),
            "folds": [
                {role: [list(k) for k in sorted(fold[role])] for role in ("train", "val", "test")}
                for fold in self.folds
            ],
        }


def _ratio_counts(n: int):
    """Desk-scale split of n positions at the 60/10/10 training ratio.

    Rounding favors training; validation and test keep at least one
    position each.
    """
    if n < 3:
        raise TooFewPositionsError(f"need at least 3 positions per class, got {n}")
    val = max(1, int(round(n * 0.125)))
    test = max(1, int(round(n * 0.125)))
    while n - val - test < 1:
        if val > 1:
            val -= 1
        elif test > 1:
            test -= 1
        else:
            raise TooFewPositionsError(f"cannot split {n} positions")
    return n - val - test, val, test


def make_splits(concentrations, positions, mode: str, seed: int = 0, n_folds: int = 4) -> SplitPlan:
    """Deterministic cross-validation plan.

    mode "position-4fold": every concentration appears in training; its
    positions rotate through train/val/test across folds.
    mode "leave-one-concentration-out": each interior concentration is
    held out in turn (boundary classes stay in training to avoid
    extrapolation); the held-out data splits 50/50 into validation and
    test.
    """
    concentrations = sorted(set(concentrations))
    positions = sorted(set(positions))
    rng = np.random.default_rng(seed)
    folds = []
    if mode == "position-4fold":
        n_train, n_val, n_test = _ratio_counts(len(positions))
        perms = {c: rng.permutation(len(positions)) for c in concentrations}
        for fold in range(n_folds):
            train, val, test = set(), set(), set()
            for c in concentrations:
                order = np.roll(perms[c], fold * (n_val + n_test))
                pos = [positions[i] for i in order]
                for p in pos[:n_val]:
                    val.add((c, p))
                for p in pos[n_val : n_val + n_test]:
                    test.add((c, p))
                for p in pos[n_val + n_test :]:
                    train.add((c, p))
            folds.append({"train": train, "val": val, "test": test})
    elif mode == "leave-one-concentration-out":
        if len(concentrations) < 3:
            raise TooFewPositionsError("leave-one-out needs at least 3 concentrations")
        interior = concentrations[1:-1]
        for held in interior:
            train, val, test = set(), set(), set()
            for c in concentrations:
                if c == held:
                    order = rng.permutation(len(positions))
                    half = len(positions) // 2
                    for i, pi in enumerate(order):
                        (val if i < half else test).add((c, positions[pi]))
                else:
                    for p in positions:
                        train.add((c, p))
            folds.append({"train": train, "val": val, "test": test})
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return SplitPlan(mode=mode, folds=tuple(folds))


def select_records(records, plan: SplitPlan, fold: int, role: str, key=None):
    """Records assigned to a fold role; training drops the excluded pushes."""
    if role not in ("train", "val", "test"):
        raise ValueError(f"unknown role {role!r}")
    if key is None:
        key = lambda r: (r.phantom_id, r.position_id)
    wanted = plan.folds[fold][role]
    out = [r for r in records if key(r) in wanted]
    if role == "train":
        out = [r for r in out if r.push_id not in plan.excluded_pushes]
    return out


def bench_throughput(params, n: int = 1000, warmup: int = 10, seed: int = 0):
    """Median single-window inference latency and throughput.

    Returns a dict with windows_per_s and ms_per_window over n >= 1
    timed inferences after warmup.
    """
    from .cnn.network import net_forward

    if n < 1:
        raise ValueError("need at least one timed inference")
    rng = np.random.default_rng(seed)
    size = params.arch.window_size
    x = rng.normal(size=(1, size, size, params.arch.frames)).astype(np.float32)
    for _ in range(warmup):
        net_forward(params, x, training=False)
    times = np.empty(n)
    for i in range(n):
        t0 = time.perf_counter()
        net_forward(params, x, training=False)
        times[i] = time.perf_counter() - t0
    med = float(np.median(times))
    return {
        "window_size": size,
        "n": n,
        "ms_per_window": med * 1e3,
        "windows_per_s": 1.0 / med if med > 0 else float("inf"),
    }
