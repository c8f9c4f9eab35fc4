"""Conventional time-of-flight elasticity estimation.

Pipeline: 3D mean filter, frequency-domain directional filter, per-pixel
time-delay estimation between laterally spaced taps (Tukey window, 10x
band-limited interpolation, cross-correlation with parabolic peak
refinement), velocity-to-modulus mapping with a calibration factor, and
multi-push fusion with Gaussian hole closing.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .errors import (
    DegenerateInputError,
    FlatSignalError,
    GeometryMismatchError,
)
from .fields import DisplacementSequence, ElasticityMap
from .geometry import DEFAULT_FRAME_RATE, GridGeom
from .phantom import DEFAULT_DENSITY, DEFAULT_POISSON

PASS_FORWARD = "+lateral"
PASS_BACKWARD = "-lateral"


@dataclass(frozen=True)
class TofConfig:
    mean_kernel: int = 5
    directional: bool = True
    lateral_distance: int = 65  # px between the two tap signals
    interp_factor: int = 10
    tukey_alpha: float = 0.5
    v_min: float = 0.1  # m/s
    v_max: float = 10.0  # m/s
    alpha: float = 0.75  # calibration factor against indentation
    post_gaussian: float = 2e-3  # smoothing kernel size in meters, 0 disables
    min_correlation: float = 0.6  # normalized peak below this is rejected
    density: float = DEFAULT_DENSITY
    poisson: float = DEFAULT_POISSON

    def __post_init__(self):
        if self.mean_kernel % 2 == 0 or self.mean_kernel < 1:
            raise ValueError("mean kernel must be odd and positive")
        if self.lateral_distance < 2:
            raise ValueError("lateral distance must be at least 2 px")
        if self.interp_factor < 1:
            raise ValueError("interpolation factor must be >= 1")
        if not 0 < self.v_min < self.v_max:
            raise ValueError("need 0 < v_min < v_max")

    @property
    def left_offset(self) -> int:
        return self.lateral_distance // 2

    @property
    def right_offset(self) -> int:
        return self.lateral_distance - self.left_offset


@dataclass(frozen=True)
class VelocityMap:
    """Per-pixel shear wave speed in m/s; NaN marks rejected estimates."""

    geom: GridGeom
    values: np.ndarray
    provenance: tuple = ()

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != self.geom.shape:
            raise GeometryMismatchError("velocity values do not match grid")
        object.__setattr__(self, "values", arr)

    @property
    def present(self) -> np.ndarray:
        return np.isfinite(self.values)


def mean_filter3(seq: DisplacementSequence, kernel: int = 5) -> DisplacementSequence:
    """Edge-replicated mean filter with the same kernel along all three axes."""
    if kernel % 2 == 0 or kernel < 1:
        raise ValueError("kernel must be odd and positive")
    out = ndimage.uniform_filter(
        np.asarray(seq.data, dtype=np.float64), size=kernel, mode="nearest"
    )
    return DisplacementSequence(
        geom=seq.geom, data=out, frame_rate=seq.frame_rate, push=seq.push
    )


def _axis_step(bins: np.ndarray, taper: int) -> np.ndarray:
    """Raised-cosine step: 0 at and below the axis, 1 beyond `taper` bins."""
    q = np.clip(bins / float(taper), 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(math.pi * q))


def directional_mask(lateral_px: int, frames: int, direction: str, taper: int = 3) -> np.ndarray:
    """(k, f) quadrant mask passing one lateral propagation direction.

    A wave moving toward +lateral occupies the quadrants where the signs
    of the lateral wavenumber and temporal frequency differ, so the
    same-sign quadrants are zeroed (and vice versa for -lateral). Both DC
    lines are kept. The quadrant edges along the wavenumber axis roll off
    over `taper` bins; the frequency split stays hard so that applying
    the filter twice is nearly idempotent even for fields with strong
    near-DC temporal content.
    """
    kb = np.fft.fftfreq(lateral_px) * lateral_px
    fb = np.fft.fftfreq(frames) * frames
    sk_pos = _axis_step(kb, taper)[:, None]
    sk_neg = _axis_step(-kb, taper)[:, None]
    f_pos = (fb > 0).astype(np.float64)[None, :]
    f_neg = (fb < 0).astype(np.float64)[None, :]
    if direction == PASS_FORWARD:
        mask = 1.0 - sk_pos * f_pos - sk_neg * f_neg
    elif direction == PASS_BACKWARD:
        mask = 1.0 - sk_pos * f_neg - sk_neg * f_pos
    else:
        raise ValueError(f"direction must be {PASS_FORWARD!r} or {PASS_BACKWARD!r}")
    return mask


def directional_filter(
    seq: DisplacementSequence, direction: str = PASS_FORWARD, taper: int = 3
) -> DisplacementSequence:
    """Suppress waves propagating against `direction` in the (k, f) domain."""
    if seq.frames < 8:
        raise ValueError("directional filtering needs at least 8 frames")
    data = np.asarray(seq.data, dtype=np.float64)
    mask = directional_mask(seq.geom.lateral_px, seq.frames, direction, taper)
    spec = np.fft.fft2(data, axes=(1, 2))
    out = np.fft.ifft2(spec * mask[None, :, :], axes=(1, 2)).real
    return DisplacementSequence(
        geom=seq.geom, data=out, frame_rate=seq.frame_rate, push=seq.push
    )


def _parabolic_offset(ym1, y0, yp1):
    """Sub-bin offset of a parabola vertex through three uniform samples."""
    denom = ym1 - 2.0 * y0 + yp1
    if denom >= 0:
        return 0.0
    return float((ym1 - yp1) / (2.0 * denom))


def _prepare(sig, n_up, window):
    x = np.asarray(sig, dtype=np.float64)
    x = (x - x.mean()) * window
    return signal.resample(x, n_up)


def _zncc_pos(au, bu, lag_lo, lag_hi):
    """Zero-normalized cross-correlation of rows of bu against au for
    positive lags lag_lo..lag_hi (b delayed relative to a).

    Plain correlation under-weights large lags because the overlap
    shrinks; normalizing each lag by its overlap statistics removes that
    bias, which otherwise inflates estimated speeds noticeably.
    Returns (zncc, overlap_count) with shape (rows, lag_hi-lag_lo+1).
    """
    npix, n = au.shape
    nfft = int(2 ** math.ceil(math.log2(2 * n - 1)))
    fa = np.fft.rfft(au, nfft, axis=1)
    fb = np.fft.rfft(bu, nfft, axis=1)
    raw = np.fft.irfft(fb * np.conj(fa), nfft, axis=1)[:, : n]

    ca = np.concatenate([np.zeros((npix, 1)), np.cumsum(au, axis=1)], axis=1)
    ca2 = np.concatenate([np.zeros((npix, 1)), np.cumsum(au * au, axis=1)], axis=1)
    cb = np.concatenate([np.zeros((npix, 1)), np.cumsum(bu, axis=1)], axis=1)
    cb2 = np.concatenate([np.zeros((npix, 1)), np.cumsum(bu * bu, axis=1)], axis=1)

    lags = np.arange(lag_lo, lag_hi + 1)
    m = (n - lags).astype(np.float64)  # overlap length per lag
    # For lag l: a over [0, n-l), b over [l, n).
    sum_a = ca[:, n - lags]
    sum_a2 = ca2[:, n - lags]
    sum_b = cb[:, n][:, None] - cb[:, lags]
    sum_b2 = cb2[:, n][:, None] - cb2[:, lags]
    cov = raw[:, lags] - sum_a * sum_b / m
    var_a = np.maximum(sum_a2 - sum_a**2 / m, 0.0)
    var_b = np.maximum(sum_b2 - sum_b**2 / m, 0.0)
    denom = np.sqrt(var_a * var_b)
    with np.errstate(invalid="ignore", divide="ignore"):
        zncc = np.where(denom > 1e-30, cov / np.where(denom > 0, denom, 1.0), 0.0)
    return zncc, m


def _delay_and_quality(sig_a, sig_b, cfg: TofConfig, frame_rate: float):
    """Delay of b relative to a in seconds, plus peak correlation coefficient."""
    a = np.asarray(sig_a, dtype=np.float64)
    b = np.asarray(sig_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 8:
        raise ValueError("signals must be equal-length 1D with >= 8 samples")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise FlatSignalError("constant signal has no delay information")
    window = signal.windows.tukey(a.size, alpha=cfg.tukey_alpha)
    n_up = a.size * cfg.interp_factor
    au = _prepare(a, n_up, window)[None, :]
    bu = _prepare(b, n_up, window)[None, :]
    # Overlaps below a quarter record carry too little evidence to score.
    lag_max = n_up - max(4, n_up // 4)
    z_pos, _ = _zncc_pos(au, bu, 0, lag_max)
    z_neg, _ = _zncc_pos(bu, au, 0, lag_max)
    zncc = np.concatenate([z_neg[0, :0:-1], z_pos[0]])
    lags = np.arange(-lag_max, lag_max + 1)
    peak = int(np.argmax(zncc))
    offset = 0.0
    if 0 < peak < zncc.size - 1:
        offset = _parabolic_offset(zncc[peak - 1], zncc[peak], zncc[peak + 1])
    delay = (lags[peak] + offset) / (frame_rate * cfg.interp_factor)
    return float(delay), float(zncc[peak])


def estimate_delay(sig_a, sig_b, cfg: TofConfig = TofConfig(), frame_rate: float = DEFAULT_FRAME_RATE) -> float:
    """Time by which sig_b lags sig_a, in seconds (sub-sample resolution)."""
    delay, _ = _delay_and_quality(sig_a, sig_b, cfg, frame_rate)
    return delay


def velocity_map(seq: DisplacementSequence, cfg: TofConfig = TofConfig()) -> VelocityMap:
    """Estimate per-pixel shear wave speed from lateral tap-pair delays.

    For each pixel, the time signals lateral_distance//2 px to the left and
    the remainder to the right are windowed, interpolated and
    cross-correlated; the signed delay is oriented by the pixel's side of
    the push so that propagation away from the push gives a positive delay.
    Pixels are rejected (NaN) when a tap is out of bounds, the delay is
    non-positive, the speed leaves [v_min, v_max], or the correlation peak
    is too weak to trust.
    """
    d, l, t = seq.data.shape
    if t < 8:
        raise ValueError("need at least 8 frames for delay estimation")
    h_left, h_right = cfg.left_offset, cfg.right_offset
    dist_m = cfg.lateral_distance * seq.geom.lateral_pitch
    cols = np.arange(h_left, l - h_right)
    values = np.full((d, l), np.nan)
    if cols.size == 0:
        return VelocityMap(geom=seq.geom, values=values)

    window = signal.windows.tukey(t, alpha=cfg.tukey_alpha)
    n_up = t * cfg.interp_factor
    rate_up = seq.frame_rate * cfg.interp_factor

    # Admissible delay band from the speed limits, additionally capped so
    # the correlation overlap keeps at least a quarter of the record;
    # peaks pinned to the band edges are rejected.
    lag_lo = max(1, int(math.ceil(dist_m / cfg.v_max * rate_up)))
    lag_hi = min(
        n_up - max(4, n_up // 4), int(math.floor(dist_m / cfg.v_min * rate_up))
    )
    if lag_hi <= lag_lo + 1:
        return VelocityMap(geom=seq.geom, values=values)
    band_lo = lag_lo - 1  # one extra bin each side for peak refinement
    band_hi = lag_hi + 1

    # The wave moves away from the push: the tap nearer the push center
    # leads, so orienting (near, far) folds both sides onto positive lags.
    left_side = cols < seq.push.lateral_center_px
    near_idx = np.where(left_side, cols + h_right, cols - h_left)
    far_idx = np.where(left_side, cols - h_left, cols + h_right)
    idx = np.arange(cols.size)

    for i in range(d):
        rows = np.asarray(seq.data[i], dtype=np.float64)
        rows = (rows - rows.mean(axis=1, keepdims=True)) * window[None, :]
        up = signal.resample(rows, n_up, axis=1)
        zncc, _ = _zncc_pos(up[near_idx], up[far_idx], band_lo, band_hi)

        peak = 1 + np.argmax(zncc[:, 1:-1], axis=1)  # within [lag_lo, lag_hi]
        at_edge = (peak <= 1) | (peak >= band_hi - band_lo - 1)
        ym1 = zncc[idx, peak - 1]
        y0 = zncc[idx, peak]
        yp1 = zncc[idx, peak + 1]
        denom = ym1 - 2.0 * y0 + yp1
        refine = (~at_edge) & (denom < 0)
        offs = np.where(refine, (ym1 - yp1) / (2.0 * np.where(refine, denom, -1.0)), 0.0)

        delay = (band_lo + peak + offs) / rate_up
        v = dist_m / delay
        ok = (
            ~at_edge
            & (v >= cfg.v_min)
            & (v <= cfg.v_max)
            & (y0 >= cfg.min_correlation)
        )
        values[i, cols] = np.where(ok, v, np.nan)
    return VelocityMap(geom=seq.geom, values=values)


def velocity_to_young(vmap: VelocityMap, cfg: TofConfig = TofConfig()) -> ElasticityMap:
    """Map speeds to Young's modulus E = alpha * rho * 2 (1+nu) * v^2 (NaN passes through)."""
    v = vmap.values
    e = cfg.alpha * cfg.density * 2.0 * (1.0 + cfg.poisson) * v**2
    return ElasticityMap(geom=vmap.geom, values=e)


def fuse_pushes(maps, cfg: TofConfig = TofConfig()) -> ElasticityMap:
    """Average elasticity maps across pushes, then close holes with a Gaussian.

    Present pixels are averaged where any map has a value; the Gaussian of
    kernel size cfg.post_gaussian (sigma = kernel/4, support radius 2 sigma)
    smooths and interpolates missing pixels from neighbors. Pixels with no
    present neighbor inside the support stay missing.
    """
    maps = list(maps)
    if not maps:
        raise ValueError("need at least one map to fuse")
    geom = maps[0].geom
    for m in maps:
        if m.geom != geom:
            raise GeometryMismatchError("cannot fuse maps on different grids")
    stack = np.stack([np.asarray(m.values, dtype=np.float64) for m in maps])
    with np.errstate(invalid="ignore"):
        counts = np.isfinite(stack).sum(axis=0)
        merged = np.where(counts > 0, np.nansum(stack, axis=0), np.nan)
        merged = merged / np.where(counts > 0, counts, 1)

    if cfg.post_gaussian <= 0:
        return ElasticityMap(geom=geom, values=merged)

    sigma_m = cfg.post_gaussian / 4.0
    sigmas = (sigma_m / geom.depth_pitch, sigma_m / geom.lateral_pitch)
    weights = np.isfinite(merged).astype(np.float64)
    filled = np.where(weights > 0, merged, 0.0)
    num = ndimage.gaussian_filter(filled, sigma=sigmas, mode="constant", truncate=2.0)
    den = ndimage.gaussian_filter(weights, sigma=sigmas, mode="constant", truncate=2.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 1e-12, num / np.where(den > 0, den, 1.0), np.nan)
    return ElasticityMap(geom=geom, values=out)


def calibrate_alpha(estimates, targets) -> float:
    """Least-squares scale aligning uncalibrated moduli with indentation targets.

    alpha = sum(e_i t_i) / sum(e_i^2), the minimizer of sum (alpha e_i - t_i)^2.
    """
    e = np.asarray(estimates, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if e.shape != t.shape or e.size < 1:
        raise ValueError("estimates and targets must be matching non-empty arrays")
    denom = float(np.dot(e, e))
    if denom == 0.0:
        raise DegenerateInputError("all estimates are zero; alpha is undefined")
    return float(np.dot(e, t) / denom)


def estimate_elasticity(seq: DisplacementSequence, cfg: TofConfig = TofConfig()) -> ElasticityMap:
    """Single-sequence ToF pipeline: filters, velocity map, modulus map.

    The directional pass direction follows the wave physics: pixels right
    of the push see +lateral propagation, pixels left of it -lateral, so
    each side is estimated from the matching filtered field.
    """
    work = mean_filter3(seq, cfg.mean_kernel)
    if not cfg.directional:
        vmap = velocity_map(work, cfg)
        return velocity_to_young(vmap, cfg)

    center = seq.push.lateral_center_px
    values = np.full(seq.geom.shape, np.nan)
    fwd = directional_filter(work, PASS_FORWARD)
    v_fwd = velocity_map(fwd, cfg).values
    values[:, center:] = v_fwd[:, center:]
    bwd = directional_filter(work, PASS_BACKWARD)
    v_bwd = velocity_map(bwd, cfg).values
    values[:, :center] = v_bwd[:, :center]
    vmap = VelocityMap(geom=seq.geom, values=values, provenance=(seq.push.lateral_center_px,))
    return velocity_to_young(vmap, cfg)
