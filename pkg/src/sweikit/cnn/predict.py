"""Pixelwise map inference by sliding spatio-temporal windows."""

import numpy as np

from ..errors import WindowTooLargeError
from ..fields import DisplacementSequence, ElasticityMap, window_margin
from .network import ModelParams, net_forward


def predict_map(
    params: ModelParams,
    seq: DisplacementSequence,
    stride: int = 1,
    batch_size: int = 256,
    region=None,
) -> ElasticityMap:
    """Predict Young's modulus (Pa) for every pixel with full window support.

    Inference runs on the stride lattice; off-lattice pixels take the value
    of their nearest lattice neighbor. Pixels whose window would cross the
    border stay missing. `region` optionally restricts the lattice to
    (row_lo, row_hi, col_lo, col_hi), half-open.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    size = params.arch.window_size
    m = window_margin(size)
    d, l = seq.geom.shape
    if size > d or size > l:
        raise WindowTooLargeError(f"{size} px window exceeds {d}x{l} image")

    r_lo, r_hi, c_lo, c_hi = (m, d - m, m, l - m)
    if region is not None:
        r_lo = max(r_lo, int(region[0]))
        r_hi = min(r_hi, int(region[1]))
        c_lo = max(c_lo, int(region[2]))
        c_hi = min(c_hi, int(region[3]))
    rows = np.arange(r_lo, r_hi, stride)
    cols = np.arange(c_lo, c_hi, stride)
    values = np.full((d, l), np.nan)
    if rows.size == 0 or cols.size == 0:
        return ElasticityMap(geom=seq.geom, values=values)

    data = np.asarray(seq.data, dtype=np.float64)
    t = data.shape[2]
    centers = [(r, c) for r in rows for c in cols]
    preds = np.empty(len(centers), dtype=np.float64)
    for start in range(0, len(centers), batch_size):
        chunk = centers[start : start + batch_size]
        xs = np.empty((len(chunk), size, size, t), dtype=np.float32)
        for i, (r, c) in enumerate(chunk):
            win = data[r - m : r + m + 1, c - m : c + m + 1, :]
            mean = win.mean()
            std = win.std()
            if std < 1e-12:
                xs[i] = 0.0
            else:
                xs[i] = ((win - mean) / std).astype(np.float32)
        out, _ = net_forward(params, xs, training=False)
        preds[start : start + len(chunk)] = np.asarray(out, dtype=np.float64)

    lattice = preds.reshape(rows.size, cols.size) * 1000.0  # kPa -> Pa
    # Nearest-lattice fill across the full supported region.
    rr = np.arange(r_lo, r_hi)
    cc = np.arange(c_lo, c_hi)
    ri = np.clip(np.round((rr - r_lo) / stride).astype(int), 0, rows.size - 1)
    ci = np.clip(np.round((cc - c_lo) / stride).astype(int), 0, cols.size - 1)
    values[np.ix_(rr, cc)] = lattice[np.ix_(ri, ci)]
    return ElasticityMap(geom=seq.geom, values=values)
