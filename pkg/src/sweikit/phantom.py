"""Ground-truth phantoms: elasticity maps, material conversions, indentation.

Circular stiff inclusions are rasterized into a background map; Young's
modulus and shear wave speed are linked through E = alpha * rho * 2(1+nu) * c^2,
and unconfined-compression (indentation) traces give the reference modulus
as the stress/strain slope over the 2-7% strain band.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError
from .fields import ElasticityMap
from .geometry import GridGeom

DEFAULT_DENSITY = 1000.0
DEFAULT_POISSON = 0.5

# Indentation specimen defaults: cylinder of 10 mm radius, 40 mm height,
# forces capped at 2 N.
SPECIMEN_RADIUS = 0.010
SPECIMEN_HEIGHT = 0.040
MAX_FORCE = 2.0
STRAIN_BAND = (0.02, 0.07)

# Desk-scale elasticity ladder used by the bundled experiments (Pa).
DEFAULT_ELASTICITIES = (20e3, 40e3, 60e3, 80e3, 100e3, 125e3)


@dataclass(frozen=True)
class Material:
    """Isotropic incompressible-ish soft solid."""

    young_modulus: float  # Pa
    density: float = DEFAULT_DENSITY  # kg/m^3
    poisson: float = DEFAULT_POISSON

    def __post_init__(self):
        if not (self.young_modulus > 0 and math.isfinite(self.young_modulus)):
            raise ValueError("Young's modulus must be finite and positive")
        if not 0 < self.poisson <= 0.5:
            raise ValueError("Poisson ratio must lie in (0, 0.5]")
        if self.density <= 0:
            raise ValueError("density must be positive")


@dataclass(frozen=True)
class Inclusion:
    center_px: tuple  # (row, col)
    radius: float  # meters
    material: Material

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("inclusion radius must be positive")


@dataclass(frozen=True)
class PhantomSpec:
    geom: GridGeom
    background: Material
    inclusions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "inclusions", tuple(self.inclusions))
        for inc in self.inclusions:
            if not self.geom.contains(*inc.center_px):
                raise ValueError(f"inclusion center {inc.center_px} outside grid")


def render_elasticity_map(spec: PhantomSpec) -> ElasticityMap:
    """Rasterize a phantom spec into a per-pixel Young's modulus map.

    Pixels at exactly the inclusion radius count as inside; later
    inclusions override earlier ones.
    """
    geom = spec.geom
    values = np.full(geom.shape, spec.background.young_modulus, dtype=np.float64)
    if spec.inclusions:
        rows = (np.arange(geom.depth_px) + 0.5) * geom.depth_pitch
        cols = (np.arange(geom.lateral_px) + 0.5) * geom.lateral_pitch
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        for inc in spec.inclusions:
            cy = (inc.center_px[0] + 0.5) * geom.depth_pitch
            cx = (inc.center_px[1] + 0.5) * geom.lateral_pitch
            dist2 = (rr - cy) ** 2 + (cc - cx) ** 2
            values[dist2 <= inc.radius**2] = inc.material.young_modulus
    return ElasticityMap(geom=geom, values=values)


def young_to_shear_speed(m: Material) -> float:
    """Shear wave speed c = sqrt(E / (2 (1+nu) rho)) in m/s."""
    return math.sqrt(m.young_modulus / (2.0 * (1.0 + m.poisson) * m.density))


def shear_speed_to_young(
    speed, alpha: float = 1.0, density: float = DEFAULT_DENSITY, poisson: float = DEFAULT_POISSON
):
    """Young's modulus E = alpha * rho * 2 (1+nu) * c^2 in Pa.

    Accepts scalars or arrays; alpha is the calibration factor against
    indentation ground truth (1.0 = uncalibrated theory).
    """
    c = np.asarray(speed, dtype=np.float64)
    out = alpha * density * 2.0 * (1.0 + poisson) * c**2
    return float(out) if np.isscalar(speed) else out


def speed_field(emap: ElasticityMap, density=DEFAULT_DENSITY, poisson=DEFAULT_POISSON) -> np.ndarray:
    """Per-pixel shear speed for an elasticity map (vectorized inverse of Eq. relation)."""
    return np.sqrt(
        np.asarray(emap.values, dtype=np.float64) / (2.0 * (1.0 + poisson) * density)
    )


@dataclass(frozen=True)
class IndentationTrace:
    """Force/displacement samples from one unconfined compression run."""

    forces: np.ndarray  # N
    displacements: np.ndarray  # m, monotone non-decreasing
    radius: float = SPECIMEN_RADIUS
    height: float = SPECIMEN_HEIGHT

    def __post_init__(self):
        f = np.asarray(self.forces, dtype=np.float64)
        d = np.asarray(self.displacements, dtype=np.float64)
        if f.shape != d.shape or f.ndim != 1:
            raise ValueError("forces and displacements must be matching 1D arrays")
        if np.any(f > MAX_FORCE):
            raise ValueError(f"forces exceed the {MAX_FORCE} N sensor cap")
        if np.any(np.diff(d) < 0):
            raise ValueError("displacement must be monotone non-decreasing")
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("specimen dimensions must be positive")
        object.__setattr__(self, "forces", f)
        object.__setattr__(self, "displacements", d)

    @property
    def stress(self) -> np.ndarray:
        return self.forces / (math.pi * self.radius**2)

    @property
    def strain(self) -> np.ndarray:
        return self.displacements / self.height


def point_modulus(force, displacement, radius=SPECIMEN_RADIUS, height=SPECIMEN_HEIGHT):
    """Single-point stress/strain ratio E = F l0 / (pi r^2 dl) in Pa."""
    stress = force / (math.pi * radius**2)
    strain = displacement / height
    return stress / strain


def indentation_young_modulus(traces, strain_band=STRAIN_BAND) -> float:
    """Joint least-squares slope of stress vs strain over all traces.

    Only samples inside the strain band are used. The fit includes an
    intercept: real stress-strain curves have a toe region, and the pure
    point ratio is biased when they miss the origin.
    """
    lo, hi = strain_band
    eps_all = []
    sig_all = []
    for trace in traces:
        eps = trace.strain
        keep = (eps >= lo) & (eps <= hi)
        eps_all.append(eps[keep])
        sig_all.append(trace.stress[keep])
    eps = np.concatenate(eps_all) if eps_all else np.empty(0)
    sig = np.concatenate(sig_all) if sig_all else np.empty(0)
    if eps.size < 2:
        raise InsufficientDataError(
            f"need at least 2 samples with strain in [{lo}, {hi}], got {eps.size}"
        )
    design = np.column_stack([eps, np.ones_like(eps)])
    coef, *_ = np.linalg.lstsq(design, sig, rcond=None)
    return float(coef[0])


def synth_indentation_trace(
    young_modulus,
    n_samples=200,
    max_strain=0.08,
    toe_offset=0.0,
    force_noise_std=0.0,
    rng=None,
    radius=SPECIMEN_RADIUS,
    height=SPECIMEN_HEIGHT,
) -> IndentationTrace:
    """Generate a linear-elastic compression trace, optionally with sensor noise."""
    strain = np.linspace(0.0, max_strain, n_samples)
    stress = young_modulus * strain + toe_offset
    forces = stress * math.pi * radius**2
    if force_noise_std > 0:
        rng = np.random.default_rng(rng)
        forces = forces + rng.normal(0.0, force_noise_std, size=forces.shape)
    forces = np.clip(forces, None, MAX_FORCE)
    return IndentationTrace(
        forces=forces, displacements=strain * height, radius=radius, height=height
    )
