"""Finite-difference shear wave propagation and ultrasound displacement sensing.

Physics stand-in for the acquisition rig: an impulse push launches a wave
through a heterogeneous elasticity map; the 2D scalar wave equation
d2u/dt2 = c^2(x) lap(u) is stepped with second-order centered differences
on a grid padded by an exponential sponge layer, and frames are sampled at
the plane-wave imaging rate. Complex IQ data can be synthesized from the
displacement field and inverted back with a 2D-autocorrelation phase
estimator, closing the sensing loop.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import CFLViolationError, GeometryMismatchError
from .fields import DisplacementSequence, ElasticityMap
from .geometry import DEFAULT_FRAME_RATE, DEFAULT_FRAMES, GridGeom, PushDescriptor
from .phantom import DEFAULT_DENSITY, DEFAULT_POISSON, speed_field

DEFAULT_CARRIER = 7.5e6  # Hz
DEFAULT_SOUND_SPEED = 1540.0  # m/s
DEFAULT_PUSH_AMPLITUDE = 20e-6  # m, peak initial displacement
# Displacement-domain noise defaults to 5% of the push peak.
DEFAULT_NOISE_FRACTION = 0.05


@dataclass(frozen=True)
class SimConfig:
    """Solver and acquisition settings for one push/imaging sequence."""

    geom: GridGeom = field(default_factory=GridGeom)
    push: PushDescriptor = field(default_factory=PushDescriptor)
    frames: int = DEFAULT_FRAMES
    frame_rate: float = DEFAULT_FRAME_RATE
    cfl_factor: float = 0.4
    # The padded margin ends in one-way (Mur) edges, which absorb the
    # long-wavelength shear content far better than any damping ramp that
    # fits in the margin; the optional sponge (strength > 0) only helps
    # corner/oblique residue and is off by default.
    absorb_width_px: int = 40
    absorb_strength: float = 0.0
    push_amplitude: float = DEFAULT_PUSH_AMPLITUDE
    noise_std: float = DEFAULT_NOISE_FRACTION * DEFAULT_PUSH_AMPLITUDE
    seed: int = 0
    density: float = DEFAULT_DENSITY
    poisson: float = DEFAULT_POISSON
    # Extrude the lateral push profile through the whole simulated depth
    # (pads included). Launches an ideal laterally propagating plane wave;
    # used by oracle experiments where waveform invariance matters.
    plane_push: bool = False

    def __post_init__(self):
        if not 0 < self.cfl_factor < 1.0 / math.sqrt(2.0):
            raise CFLViolationError(
                f"cfl_factor {self.cfl_factor} must lie in (0, 1/sqrt(2))"
            )
        if self.absorb_width_px < 10:
            raise ValueError("absorbing layer must be at least 10 px wide")
        if self.frames < 1 or self.frame_rate <= 0:
            raise ValueError("frames and frame_rate must be positive")
        if self.noise_std < 0:
            raise ValueError("noise std cannot be negative")


@dataclass(frozen=True)
class IQSequence:
    """Complex demodulated echo data on the imaging grid."""

    geom: GridGeom
    data: np.ndarray  # (depth, lateral, time), complex
    carrier: float = DEFAULT_CARRIER
    sound_speed: float = DEFAULT_SOUND_SPEED
    frame_rate: float = DEFAULT_FRAME_RATE
    push: PushDescriptor = field(default_factory=PushDescriptor)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 3 or arr.shape[:2] != self.geom.shape:
            raise GeometryMismatchError("IQ data shape does not match grid")
        if not np.all(np.isfinite(arr)):
            raise ValueError("IQ data must be finite")
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[2]

    @property
    def wavelength(self) -> float:
        return self.sound_speed / self.carrier


def _push_profile(
    geom: GridGeom, push: PushDescriptor, pad: int, plane_push: bool = False
) -> np.ndarray:
    """Initial displacement: Gaussian lateral lobe times a depth window.

    The lateral Gaussian has half width at half max equal to the push
    element half width. The depth window is a raised cosine spanning the
    surface down to the push depth extent; hard window edges would radiate
    opposite-sign diffraction waves that measurably distort peak arrival
    times along the propagation path. With plane_push the lateral profile
    is extruded over the full padded depth instead.
    """
    d, l = geom.depth_px + 2 * pad, geom.lateral_px + 2 * pad
    sigma = push.element_halfwidth_px / math.sqrt(2.0 * math.log(2.0))
    cols = np.arange(l) - (push.lateral_center_px + pad)
    lat = np.exp(-0.5 * (cols / sigma) ** 2)
    if plane_push:
        return np.outer(np.ones(d), lat)
    npush = int(round(push.depth_extent / geom.depth_pitch))
    npush = max(3, min(npush, geom.depth_px))
    dep = np.zeros(d)
    n = np.arange(npush)
    dep[pad : pad + npush] = 0.5 * (1.0 - np.cos(2.0 * math.pi * n / (npush - 1)))
    return np.outer(dep, lat)


def _sponge(shape, width, strength, lateral_only=False) -> np.ndarray:
    """Damping coefficients gamma*dt: 0 in the interior, quadratic ramp
    toward the edges.

    lateral_only leaves the depth boundaries undamped (used with plane
    pushes, where damping the uniform column ends would radiate inward).
    """
    d, l = shape
    ramp_l = np.minimum(np.arange(l), np.arange(l)[::-1])
    if lateral_only:
        dist = np.broadcast_to(ramp_l, shape).astype(np.float64)
    else:
        ramp_d = np.minimum(np.arange(d), np.arange(d)[::-1])
        dist = np.minimum.outer(ramp_d, ramp_l).astype(np.float64)
    gdt = np.zeros(shape)
    inside = dist < width
    gdt[inside] = strength * ((width - dist[inside]) / width) ** 2
    return gdt


def simulate(emap: ElasticityMap, cfg: SimConfig) -> DisplacementSequence:
    """Propagate the push through the map and sample displacement frames.

    The solver steps at cfl_factor * min_pitch / max(c) independently of
    the 7 kHz frame clock; each frame is the nearest solver step. Gaussian
    displacement noise of std cfg.noise_std is added per recorded frame.
    """
    if emap.geom != cfg.geom:
        raise GeometryMismatchError("elasticity map and sim config grids differ")
    geom = cfg.geom
    c = speed_field(emap, density=cfg.density, poisson=cfg.poisson)
    if not np.all(np.isfinite(c)):
        raise ValueError("elasticity map must be finite everywhere for simulation")
    c_max = float(c.max())
    dd, dl = geom.depth_pitch, geom.lateral_pitch
    dt = cfg.cfl_factor * min(dd, dl) / c_max
    # Anisotropic-grid stability bound for the 5-point scheme.
    courant = c_max * dt * math.sqrt(1.0 / dd**2 + 1.0 / dl**2)
    if courant >= 1.0:
        raise CFLViolationError(
            f"time step {dt:.3e} s unstable (courant {courant:.3f} >= 1)"
        )

    pad = cfg.absorb_width_px
    cp = np.pad(c, pad, mode="edge")
    c2 = cp**2
    gdt = _sponge(c2.shape, pad, cfg.absorb_strength, lateral_only=cfg.plane_push)
    damp_lo = 1.0 - gdt
    damp_inv = 1.0 / (1.0 + gdt)
    profile = _push_profile(geom, cfg.push, pad, plane_push=cfg.plane_push)

    # One-way (first-order Mur) outer edges soak up the long-wavelength
    # content the sponge ramp cannot absorb at normal incidence.
    mur_l = (cp[:, 1] * dt - dl) / (cp[:, 1] * dt + dl)
    mur_r = (cp[:, -2] * dt - dl) / (cp[:, -2] * dt + dl)
    mur_t = (cp[1, :] * dt - dd) / (cp[1, :] * dt + dd)
    mur_b = (cp[-2, :] * dt - dd) / (cp[-2, :] * dt + dd)

    u = cfg.push_amplitude * profile
    u_prev = u.copy()

    frame_times = cfg.push.start_delay + np.arange(cfg.frames) / cfg.frame_rate
    frame_steps = np.rint(frame_times / dt).astype(int)
    if np.unique(frame_steps).size != cfg.frames:
        raise CFLViolationError(
            "solver step is coarser than the frame clock; increase resolution"
        )
    n_steps = int(frame_steps.max())

    frames = np.empty((geom.depth_px, geom.lateral_px, cfg.frames), dtype=np.float64)
    record = {step: k for k, step in enumerate(frame_steps)}
    interior = (slice(pad, pad + geom.depth_px), slice(pad, pad + geom.lateral_px))

    if 0 in record:
        frames[:, :, record[0]] = u[interior]

    inv_dd2, inv_dl2 = 1.0 / dd**2, 1.0 / dl**2
    lap = np.zeros_like(u)
    for step in range(1, n_steps + 1):
        lap[1:-1, 1:-1] = (
            (u[2:, 1:-1] - 2.0 * u[1:-1, 1:-1] + u[:-2, 1:-1]) * inv_dd2
            + (u[1:-1, 2:] - 2.0 * u[1:-1, 1:-1] + u[1:-1, :-2]) * inv_dl2
        )
        u_next = (2.0 * u - damp_lo * u_prev + (dt**2) * c2 * lap) * damp_inv
        u_next[:, 0] = u[:, 1] + mur_l * (u_next[:, 1] - u[:, 0])
        u_next[:, -1] = u[:, -2] + mur_r * (u_next[:, -2] - u[:, -1])
        if cfg.plane_push:
            # Neumann depth boundaries keep the extruded column uniform.
            u_next[0, :] = u_next[1, :]
            u_next[-1, :] = u_next[-2, :]
        else:
            u_next[0, :] = u[1, :] + mur_t * (u_next[1, :] - u[0, :])
            u_next[-1, :] = u[-2, :] + mur_b * (u_next[-2, :] - u[-1, :])
        u_prev = u
        u = u_next
        if step in record:
            frames[:, :, record[step]] = u[interior]

    rng = np.random.default_rng(cfg.seed)
    if cfg.noise_std > 0:
        frames = frames + rng.normal(0.0, cfg.noise_std, size=frames.shape)
    return DisplacementSequence(
        geom=geom, data=frames, frame_rate=cfg.frame_rate, push=cfg.push
    )


def synthesize_iq(
    seq: DisplacementSequence,
    speckle_seed: int = 0,
    carrier: float = DEFAULT_CARRIER,
    sound_speed: float = DEFAULT_SOUND_SPEED,
    noise_std: float = 0.0,
) -> IQSequence:
    """Phase-modulate a frozen speckle field with the axial displacement.

    Per pixel: IQ(t) = s * exp(i (phi0 + 4 pi f0 u(t) / c0)) plus optional
    complex Gaussian noise; s is Rayleigh, phi0 uniform, both fixed by
    speckle_seed.
    """
    rng = np.random.default_rng(speckle_seed)
    shape = seq.geom.shape
    magnitude = rng.rayleigh(scale=1.0, size=shape)
    phi0 = rng.uniform(0.0, 2.0 * math.pi, size=shape)
    u = np.asarray(seq.data, dtype=np.float64)
    phase = phi0[:, :, None] + 4.0 * math.pi * carrier * u / sound_speed
    iq = magnitude[:, :, None] * np.exp(1j * phase)
    if noise_std > 0:
        iq = iq + noise_std * (
            rng.normal(size=u.shape) + 1j * rng.normal(size=u.shape)
        )
    return IQSequence(
        geom=seq.geom,
        data=iq,
        carrier=carrier,
        sound_speed=sound_speed,
        frame_rate=seq.frame_rate,
        push=seq.push,
    )


def loupas_displacement(
    iq: IQSequence, axial_kernel: int = 5, ensemble: int = 2
) -> DisplacementSequence:
    """Recover axial displacement from IQ data by autocorrelation phase.

    The lag-one autocorrelation is averaged over an axial_kernel x ensemble
    neighborhood; its phase maps to an inter-frame displacement increment
    u = c0 * dphi / (4 pi f0), accumulated relative to frame 0. Pixels whose
    correlation magnitude collapses are zeroed and flagged invalid.
    """
    if axial_kernel < 1 or axial_kernel % 2 == 0:
        raise ValueError("axial kernel must be odd and >= 1")
    if ensemble < 2:
        raise ValueError("ensemble must cover at least 2 frames")
    data = iq.data
    t = data.shape[2]
    # Lag-one products for every consecutive frame pair.
    prod = data[:, :, 1:] * np.conj(data[:, :, :-1])
    if axial_kernel > 1:
        prod = ndimage.uniform_filter1d(
            prod.real, size=axial_kernel, axis=0, mode="nearest"
        ) + 1j * ndimage.uniform_filter1d(
            prod.imag, size=axial_kernel, axis=0, mode="nearest"
        )

    scale = iq.sound_speed / (4.0 * math.pi * iq.carrier)
    floor = 1e-9 * float(np.mean(np.abs(data[:, :, 0]) ** 2) + 1e-300)
    out = np.zeros((data.shape[0], data.shape[1], t), dtype=np.float64)
    valid = np.ones(iq.geom.shape, dtype=bool)
    pairs = ensemble - 1
    for n in range(1, t):
        lo = max(0, n - pairs)
        r = prod[:, :, lo:n].mean(axis=2)
        mag = np.abs(r)
        weak = mag < floor
        dphi = np.where(weak, 0.0, np.angle(np.where(weak, 1.0, r)))
        # complex-multiply roundoff leaves O(1e-16) phase residue on
        # constant signals; clamp far below any physical displacement
        dphi[np.abs(dphi) < 1e-12] = 0.0
        valid &= ~weak
        out[:, :, n] = out[:, :, n - 1] + scale * dphi
    return DisplacementSequence(
        geom=iq.geom,
        data=out,
        frame_rate=iq.frame_rate,
        push=iq.push,
        valid=valid,
    )
