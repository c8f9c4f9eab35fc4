"""Field containers and spatio-temporal window operations.

Conventions: displacement data is indexed [depth][lateral][time] in meters,
2D maps are indexed [depth][lateral]. Rejected / unsupported map pixels are
stored as NaN ("missing"). Field payloads are float32, matching the on-disk
container format.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryMismatchError, OutOfBoundsError
from .geometry import DEFAULT_FRAME_RATE, GridGeom, PushDescriptor

# Window sizes evaluated throughout: 65, 33, 17, 9 and 5 px square.
WINDOW_SIZES = (65, 33, 17, 9, 5)


@dataclass(frozen=True)
class DisplacementSequence:
    """Axial displacement over the imaging grid and time."""

    geom: GridGeom
    data: np.ndarray  # (depth, lateral, time), meters
    frame_rate: float = DEFAULT_FRAME_RATE
    push: PushDescriptor = field(default_factory=PushDescriptor)
    valid: np.ndarray | None = None  # optional per-pixel estimator flag

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError("displacement data must be (depth, lateral, time)")
        if arr.shape[:2] != self.geom.shape:
            raise GeometryMismatchError(
                f"data shape {arr.shape[:2]} does not match grid {self.geom.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("displacement data must be finite")
        if self.frame_rate <= 0:
            raise ValueError("frame rate must be positive")
        self.push.validate_for(self.geom)
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ElasticityMap:
    """Young's modulus per pixel in Pa; NaN marks missing estimates."""

    geom: GridGeom
    values: np.ndarray  # (depth, lateral), Pa
    units: str = "Pa"

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.shape != self.geom.shape:
            raise GeometryMismatchError(
                f"map shape {arr.shape} does not match grid {self.geom.shape}"
            )
        object.__setattr__(self, "values", arr)

    @property
    def present(self) -> np.ndarray:
        return np.isfinite(self.values)


@dataclass(frozen=True)
class SpatioTemporalWindow:
    """Crop of a displacement sequence centered at one pixel."""

    data: np.ndarray  # (hs, ws, t)
    center: tuple  # (row, col) in the source grid
    source: str = ""

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError("window data must be (hs, ws, t)")
        hs, ws = arr.shape[:2]
        if hs % 2 == 0 or ws % 2 == 0:
            raise ValueError("window spatial sizes must be odd")
        object.__setattr__(self, "data", arr)

    @property
    def spatial_size(self) -> tuple:
        return self.data.shape[:2]


@dataclass(frozen=True)
class DatasetRecord:
    """One acquisition paired with its elasticity label and identifiers.

    `label` is the Young's modulus in Pa for homogeneous phantoms;
    inhomogeneous phantoms carry a per-pixel `label_map` instead.
    """

    sequence: DisplacementSequence
    label: float | None = None
    label_map: ElasticityMap | None = None
    phantom_id: str = ""
    position_id: int = 0
    push_id: int = 0

    def __post_init__(self):
        if (self.label is None) == (self.label_map is None):
            raise ValueError("record needs exactly one of label / label_map")
        if self.label is not None and not (np.isfinite(self.label) and self.label > 0):
            raise ValueError("scalar label must be finite and positive")
        if self.label_map is not None and self.label_map.geom != self.sequence.geom:
            raise GeometryMismatchError("label map grid differs from sequence grid")

    def label_at(self, row: int, col: int) -> float:
        """Training target in Pa at a window center."""
        if self.label is not None:
            return float(self.label)
        return float(self.label_map.values[row, col])


def window_margin(size: int) -> int:
    return (size - 1) // 2


def extract_window(seq: DisplacementSequence, center: tuple, size: int) -> SpatioTemporalWindow:
    """Cut the `size` x `size` x t sub-array centered at (row, col).

    No padding: the window must lie fully inside the grid, mirroring the
    interior placement of training crops.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError("window size must be odd and positive")
    row, col = int(center[0]), int(center[1])
    m = window_margin(size)
    if (
        row - m < 0
        or col - m < 0
        or row + m >= seq.geom.depth_px
        or col + m >= seq.geom.lateral_px
    ):
        raise OutOfBoundsError(
            f"window of size {size} at ({row}, {col}) crosses the "
            f"{seq.geom.depth_px}x{seq.geom.lateral_px} border"
        )
    data = seq.data[row - m : row + m + 1, col - m : col + m + 1, :]
    return SpatioTemporalWindow(data=np.array(data), center=(row, col))


def normalize_window(w: SpatioTemporalWindow) -> SpatioTemporalWindow:
    """Standardize a window to zero mean and unit (population) std.

    Zero-variance windows come back all zeros; they carry no wave
    information and erroring would break batch pipelines.
    """
    data = np.asarray(w.data, dtype=np.float64)
    if data.size <= 1:
        raise ValueError("window must have more than one element")
    mean = data.mean()
    std = data.std()
    if std < 1e-12:
        out = np.zeros_like(data)
    else:
        out = (data - mean) / std
    return SpatioTemporalWindow(data=out, center=w.center, source=w.source)
