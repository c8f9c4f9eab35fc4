"""Request/response models for the HTTP service.

These models double as the published JSON config schemas: unknown keys are
rejected so configuration drift fails fast, and validation errors carry
field paths.
"""

from pydantic import BaseModel, ConfigDict, Field

from ..geometry import (
    DEFAULT_DEPTH_EXTENT,
    DEFAULT_DEPTH_PX,
    DEFAULT_FRAME_RATE,
    DEFAULT_FRAMES,
    DEFAULT_LATERAL_EXTENT,
    DEFAULT_LATERAL_PX,
    DEFAULT_PUSH_DELAY,
    DEFAULT_PUSH_DEPTH,
    DEFAULT_PUSH_HALFWIDTH_PX,
)
from ..wavesim import DEFAULT_NOISE_FRACTION, DEFAULT_PUSH_AMPLITUDE


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridGeomModel(StrictModel):
    depth_px: int = DEFAULT_DEPTH_PX
    lateral_px: int = DEFAULT_LATERAL_PX
    depth_extent: float = DEFAULT_DEPTH_EXTENT
    lateral_extent: float = DEFAULT_LATERAL_EXTENT


class PushModel(StrictModel):
    lateral_center_px: int = DEFAULT_LATERAL_PX // 2
    element_halfwidth_px: int = DEFAULT_PUSH_HALFWIDTH_PX
    depth_extent: float = DEFAULT_PUSH_DEPTH
    start_delay: float = DEFAULT_PUSH_DELAY


class MaterialModel(StrictModel):
    young_modulus: float = Field(gt=0)
    density: float = 1000.0
    poisson: float = 0.5


class InclusionModel(StrictModel):
    center_px: tuple[int, int]
    radius: float = Field(gt=0)
    material: MaterialModel


class PhantomConfig(StrictModel):
    geom: GridGeomModel = GridGeomModel()
    background: MaterialModel
    inclusions: list[InclusionModel] = []


class SimBatchConfig(StrictModel):
    """Acquisition batch: positions x push locations over one phantom."""

    geom: GridGeomModel = GridGeomModel()
    positions: int = 1
    push_lateral_px: list[int] | None = None  # default: 7 spots across the probe
    push: PushModel = PushModel()
    frames: int = DEFAULT_FRAMES
    frame_rate: float = DEFAULT_FRAME_RATE
    cfl_factor: float = 0.4
    absorb_width_px: int = 40
    absorb_strength: float = 0.0
    push_amplitude: float = DEFAULT_PUSH_AMPLITUDE
    noise_std: float = DEFAULT_NOISE_FRACTION * DEFAULT_PUSH_AMPLITUDE
    plane_push: bool = False
    seed: int = 0
    phantom_id: str = ""


class TofConfigModel(StrictModel):
    mean_kernel: int = 5
    directional: bool = True
    lateral_distance: int = 65
    interp_factor: int = 10
    tukey_alpha: float = 0.5
    v_min: float = 0.1
    v_max: float = 10.0
    alpha: float = 0.75
    post_gaussian: float = 2e-3
    min_correlation: float = 0.6
    density: float = 1000.0
    poisson: float = 0.5


class ArchModel(StrictModel):
    stem_channels: tuple[int, int, int] = (8, 16, 16)
    growth_rate: int = 12
    kernel: int = 3
    spatial_stride: int | None = None  # None: derived from window size
    pool: tuple[int, int, int] = (2, 2, 2)
    window_size: int = 33
    frames: int = DEFAULT_FRAMES


class TrainModel(StrictModel):
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
    roi: tuple[int, int] = (121, 181)
    val_fraction: float = 0.125
    finetune_epochs: int = 10


class Manifest(StrictModel):
    command: str
    tool_version: str
    config_sha256: str
    seeds: list[int]
    inputs: list[str]
    outputs: list[str]
    wall_time_s: float


class PhantomRequest(StrictModel):
    config: PhantomConfig
    out_path: str
    preview_pgm: str | None = None


class SimulateRequest(StrictModel):
    phantom_path: str
    config: SimBatchConfig
    out_path: str


class TofRequest(StrictModel):
    in_path: str
    config: TofConfigModel = TofConfigModel()
    out_path: str


class TrainRequest(StrictModel):
    data_path: str
    arch: ArchModel = ArchModel()
    config: TrainModel = TrainModel()
    model_out: str
    history_out: str | None = None
    finetune_data_path: str | None = None


class PredictRequest(StrictModel):
    model_path: str
    in_path: str
    out_path: str
    stride: int = 1


class EvalRequest(StrictModel):
    pred_path: str
    truth_path: str
    metrics_out: str
    dice_threshold: float | None = None


class BenchRequest(StrictModel):
    model_path: str
    n: int = 1000


class RenderRequest(StrictModel):
    map_path: str
    out_path: str
    lo: float
    hi: float
    record_index: int = 0


class PathResponse(StrictModel):
    outputs: list[str]
    manifest: Manifest
    detail: dict = {}
