"""Imaging grid geometry and push placement."""

from dataclasses import dataclass

# Imaging defaults: 250 x 600 px over a 20 x 33 mm field of view,
# 35 frames at 7 kHz plane-wave rate.
DEFAULT_DEPTH_PX = 250
DEFAULT_LATERAL_PX = 600
DEFAULT_DEPTH_EXTENT = 0.020
DEFAULT_LATERAL_EXTENT = 0.033
DEFAULT_FRAME_RATE = 7000.0
DEFAULT_FRAMES = 35

# Push defaults: 11-element unfocused segment (0.29 mm element pitch,
# ~1.45 mm half width ~= 26 px laterally), 10 mm deep, imaging engaged
# 0.13 ms after the push.
DEFAULT_PUSH_HALFWIDTH_PX = 26
DEFAULT_PUSH_DEPTH = 0.010
DEFAULT_PUSH_DELAY = 0.13e-3


@dataclass(frozen=True)
class GridGeom:
    """Pixel grid over a physical field of view (meters)."""

    depth_px: int = DEFAULT_DEPTH_PX
    lateral_px: int = DEFAULT_LATERAL_PX
    depth_extent: float = DEFAULT_DEPTH_EXTENT
    lateral_extent: float = DEFAULT_LATERAL_EXTENT

    def __post_init__(self):
        if self.depth_px < 1 or self.lateral_px < 1:
            raise ValueError("grid must have at least one pixel per axis")
        if self.depth_extent <= 0 or self.lateral_extent <= 0:
            raise ValueError("grid extents must be positive")

    @property
    def depth_pitch(self) -> float:
        return self.depth_extent / self.depth_px

    @property
    def lateral_pitch(self) -> float:
        return self.lateral_extent / self.lateral_px

    @property
    def shape(self) -> tuple:
        return (self.depth_px, self.lateral_px)

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.depth_px and 0 <= col < self.lateral_px


@dataclass(frozen=True)
class PushDescriptor:
    """Where and how the acoustic push excites the medium."""

    lateral_center_px: int = DEFAULT_LATERAL_PX // 2
    element_halfwidth_px: int = DEFAULT_PUSH_HALFWIDTH_PX
    depth_extent: float = DEFAULT_PUSH_DEPTH
    start_delay: float = DEFAULT_PUSH_DELAY

    def __post_init__(self):
        if self.lateral_center_px < 0:
            raise ValueError("push center must be a valid lateral index")
        if self.element_halfwidth_px < 1:
            raise ValueError("push half width must be at least one pixel")
        if self.depth_extent <= 0:
            raise ValueError("push depth extent must be positive")
        if self.start_delay < 0:
            raise ValueError("start delay cannot be negative")

    def validate_for(self, geom: GridGeom):
        if not 0 <= self.lateral_center_px < geom.lateral_px:
            raise ValueError(
                f"push center {self.lateral_center_px} outside lateral range "
                f"0..{geom.lateral_px - 1}"
            )
