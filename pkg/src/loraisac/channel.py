"""
Propagation and impairment models.

``propagate`` is the linear part (multipath superposition, soil layer);
``impair`` adds the transceiver effects (CFO, SFO, AWGN).  ``apply_scene``
is the two in sequence.  Keeping them apart lets the two antennas of a
switched emission share one noise realisation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import ConfigError, DomainError
from .phy import IqBuffer

SPEED_OF_LIGHT = 299_792_458.0

# Topp et al. (1980) empirical mixing polynomial, ascending powers of theta.
TOPP_COEFFS = (3.03, 9.3, 146.0, -76.7)
THETA_MAX = 0.5


def permittivity_of_moisture(theta):
    """Relative permittivity of soil at volumetric water content ``theta``."""
    t = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > THETA_MAX):
        raise DomainError(f"volumetric moisture must lie in [0, {THETA_MAX}], got {theta!r}")
    a0, a1, a2, a3 = TOPP_COEFFS
    eps = a0 + t * (a1 + t * (a2 + t * a3))
    return float(eps) if np.ndim(eps) == 0 else eps


EPS_MIN = permittivity_of_moisture(0.0)
EPS_MAX = permittivity_of_moisture(THETA_MAX)


def phase_for_permittivity(eps_r, d, fc):
    """Phase (rad) accrued over ``d`` metres of a medium with permittivity ``eps_r``."""
    return 2 * np.pi * fc * d * np.sqrt(eps_r) / SPEED_OF_LIGHT


@dataclass(frozen=True)
class SoilProfile:
    moisture: float
    antenna_separation_d: float = 0.05
    attenuation_per_meter: float = 0.0

    def __post_init__(self):
        if not 0 <= self.moisture <= THETA_MAX:
            raise ConfigError(f"moisture must lie in [0, {THETA_MAX}], got {self.moisture}")
        if not self.antenna_separation_d > 0:
            raise ConfigError(f"antenna_separation_d must be positive, got {self.antenna_separation_d}")
        if self.attenuation_per_meter < 0:
            raise ConfigError("attenuation_per_meter must be non-negative")

    def to_dict(self):
        return {"moisture": self.moisture, "antenna_separation_d": self.antenna_separation_d,
                "attenuation_per_meter": self.attenuation_per_meter}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def soil_phase_shift(soil: SoilProfile, fc: float) -> float:
    """Extra phase of the deeper antenna relative to the shallower one.

    Narrowband: evaluated at the carrier only.
    """
    eps = permittivity_of_moisture(soil.moisture)
    return float(phase_for_permittivity(eps, soil.antenna_separation_d, fc))


@dataclass(frozen=True)
class HumanTrajectory:
    """Excess reflected-path length (m) as a function of time (s).

    ``walking`` sums ``n_components`` sinusoidal velocity terms with random
    frequencies below ``max_freq`` and random phases, scaled to an RMS
    rate of ``speed`` m/s.  ``still`` is constant at ``base_length``.
    """

    kind: str = "still"
    seed: int = 0
    base_length: float = 0.0
    speed: float = 1.0
    max_freq: float = 2.0
    min_freq: float = 0.2
    n_components: int = 8

    def __post_init__(self):
        if self.kind not in ("walking", "still"):
            raise ConfigError(f"trajectory kind must be 'walking' or 'still', got {self.kind!r}")
        if not 0 < self.min_freq < self.max_freq:
            raise ConfigError("need 0 < min_freq < max_freq")

    @cached_property
    def _terms(self):
        rng = np.random.default_rng([int(self.seed), 0x7A1C])
        f = rng.uniform(self.min_freq, self.max_freq, self.n_components)
        a = rng.rayleigh(1.0, self.n_components)
        a *= self.speed / np.sqrt(np.sum(a ** 2) / 2)
        phi = rng.uniform(0, 2 * np.pi, self.n_components)
        return f, a, phi

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "still":
            return np.zeros_like(t)
        f, a, phi = self._terms
        return np.sum(a * np.cos(2 * np.pi * f * t[..., None] + phi), axis=-1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "still":
            out = np.full_like(t, self.base_length)
        else:
            f, a, phi = self._terms
            w = 2 * np.pi * f
            out = self.base_length + np.sum(
                (a / w) * (np.sin(w * t[..., None] + phi) - np.sin(phi)), axis=-1)
        return float(out) if out.ndim == 0 else out

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "base_length": self.base_length,
                "speed": self.speed, "max_freq": self.max_freq, "min_freq": self.min_freq,
                "n_components": self.n_components}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def human_trajectory(kind: str, seed: int = 0, **kwargs) -> HumanTrajectory:
    return HumanTrajectory(kind=kind, seed=seed, **kwargs)


@dataclass(frozen=True)
class PathSpec:
    kind: str = "static"
    base_delay: float = 0.0
    base_gain: complex = 1.0 + 0j
    motion: HumanTrajectory | None = None

    def __post_init__(self):
        if self.kind not in ("static", "human"):
            raise ConfigError(f"path kind must be 'static' or 'human', got {self.kind!r}")
        if self.base_delay < 0:
            raise ConfigError("base_delay must be non-negative")
        if abs(self.base_gain) > 1 + 1e-12:
            raise ConfigError(f"|base_gain| must not exceed 1, got {abs(self.base_gain)}")
        object.__setattr__(self, "base_gain", complex(self.base_gain))

    def delay(self, t: float) -> float:
        if self.motion is None:
            return self.base_delay
        return self.base_delay + self.motion(t) / SPEED_OF_LIGHT

    def to_dict(self):
        return {"kind": self.kind, "base_delay": self.base_delay,
                "base_gain": [self.base_gain.real, self.base_gain.imag],
                "motion": None if self.motion is None else self.motion.to_dict()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        g = d.get("base_gain", 1.0)
        d["base_gain"] = complex(*g) if isinstance(g, (list, tuple)) else complex(g)
        if d.get("motion") is not None:
            d["motion"] = HumanTrajectory.from_dict(d["motion"])
        return cls(**d)


@dataclass(frozen=True)
class Impairments:
    snr_db: float | None = None
    cfo: float = 0.0
    sfo_ppm: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if abs(self.sfo_ppm) > 100:
            raise ConfigError(f"|sfo_ppm| must not exceed 100, got {self.sfo_ppm}")

    def to_dict(self):
        return {"snr_db": self.snr_db, "cfo": self.cfo, "sfo_ppm": self.sfo_ppm, "rng_seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class ChannelScene:
    """Paths seen by gateway antenna 1; ``rx2_paths`` by a second RX antenna.

    ``tx2_phase`` (rad) is a fixed rotation on everything TX antenna 2
    emits, e.g. a feed-line length mismatch between the two antennas.
    """

    paths: tuple = (PathSpec(),)
    soil: SoilProfile | None = None
    impairments: Impairments = field(default_factory=Impairments)
    rx2_paths: tuple | None = None
    carrier_freq: float = 868e6
    tx2_phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise ConfigError("a channel scene needs at least one path")
        if self.rx2_paths is not None:
            object.__setattr__(self, "rx2_paths", tuple(self.rx2_paths))
            if not self.rx2_paths:
                raise ConfigError("rx2_paths, when given, needs at least one path")

    def with_seed(self, seed: int) -> "ChannelScene":
        return replace(self, impairments=replace(self.impairments, rng_seed=seed))

    def to_dict(self):
        return {
            "paths": [p.to_dict() for p in self.paths],
            "soil": None if self.soil is None else self.soil.to_dict(),
            "impairments": self.impairments.to_dict(),
            "rx2_paths": None if self.rx2_paths is None else [p.to_dict() for p in self.rx2_paths],
            "carrier_freq": self.carrier_freq,
            "tx2_phase": self.tx2_phase,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            paths=tuple(PathSpec.from_dict(p) for p in d["paths"]),
            soil=None if d.get("soil") is None else SoilProfile.from_dict(d["soil"]),
            impairments=Impairments.from_dict(d.get("impairments", {})),
            rx2_paths=None if d.get("rx2_paths") is None else tuple(PathSpec.from_dict(p) for p in d["rx2_paths"]),
            carrier_freq=d.get("carrier_freq", 868e6),
            tx2_phase=d.get("tx2_phase", 0.0),
        )


def _shift(x, k):
    if k == 0:
        return x
    out = np.zeros_like(x)
    if k < x.shape[0]:
        out[k:] = x[: x.shape[0] - k]
    return out


def propagate(buf: IqBuffer, scene: ChannelScene, antenna_tag: int = 1, t: float = 0.0,
              rx_antenna: int = 1) -> IqBuffer:
    """Multipath superposition, plus the soil layer for TX antenna 2."""
    if antenna_tag not in (1, 2) or rx_antenna not in (1, 2):
        raise DomainError("antenna tags are 1 or 2")
    x = buf.samples
    if x.shape[0] == 0:
        return buf
    paths = scene.paths if rx_antenna == 1 else (scene.rx2_paths or scene.paths)
    fc = scene.carrier_freq
    y = np.zeros_like(x)
    for p in paths:
        tau = p.delay(t)
        y = y + p.base_gain * np.exp(-2j * np.pi * fc * tau) * _shift(x, int(round(tau * buf.sample_rate)))
    if antenna_tag == 2 and scene.tx2_phase:
        y = y * np.exp(1j * scene.tx2_phase)
    if antenna_tag == 2 and scene.soil is not None:
        soil = scene.soil
        loss_db = soil.attenuation_per_meter * soil.antenna_separation_d
        y = y * (10 ** (-loss_db / 20)) * np.exp(-1j * soil_phase_shift(soil, fc))
    return buf.with_samples(y)


def impair(buf: IqBuffer, imp: Impairments, t: float = 0.0) -> IqBuffer:
    """CFO rotation, SFO resampling, then AWGN at ``snr_db`` re. signal power.

    The CFO phase runs on absolute time ``t + n/Fs`` so consecutive packets
    see different carrier phases, as with free-running oscillators.  Signal
    power is the mean over non-zero samples (unit power if there are none).
    """
    x = buf.samples
    n_s = x.shape[0]
    if n_s == 0:
        return buf
    fs = buf.sample_rate
    n = np.arange(n_s)
    y = x
    if imp.cfo:
        y = y * np.exp(2j * np.pi * imp.cfo * (t + n / fs))
    if imp.sfo_ppm:
        pos = n * (1.0 + imp.sfo_ppm * 1e-6)
        y = np.interp(pos, n, y.real, right=0.0) + 1j * np.interp(pos, n, y.imag, right=0.0)
    if imp.snr_db is not None:
        active = np.abs(y) > 0
        p_sig = float(np.mean(np.abs(y[active]) ** 2)) if active.any() else 1.0
        p_noise = p_sig / 10 ** (imp.snr_db / 10)
        rng = np.random.default_rng(imp.rng_seed)
        noise = rng.standard_normal((2, n_s))
        y = y + np.sqrt(p_noise / 2) * (noise[0] + 1j * noise[1])
    return buf.with_samples(y)


def apply_scene(buf: IqBuffer, scene: ChannelScene, antenna_tag: int = 1, t: float = 0.0,
                rx_antenna: int = 1) -> IqBuffer:
    return impair(propagate(buf, scene, antenna_tag, t, rx_antenna), scene.impairments, t)
