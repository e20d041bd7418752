"""Propagation and reception: log-distance path loss with LOS/NLOS shadowing,
link budget, and the SNR / SIR decode test."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from v2xsim.scenario import ScenarioConfig


class Reception(enum.Enum):
    DELIVERED = "delivered"
    SNR_FAIL = "snr_fail"
    SIR_FAIL = "sir_fail"


@dataclass(frozen=True)
class LinkSample:
    distance: float
    los: bool
    shadowing_db: float
    path_loss_db: float


@dataclass
class TransmissionEvent:
    """One frame on the air. ``rx_mw`` caches the sampled received power at
    every node (zero at the transmitter itself) once the engine fills it in."""

    tx_id: int
    power_dbm: float
    start: float
    end: float
    position: tuple[float, float]
    beacon_ref: object = None
    rx_mw: np.ndarray | None = field(default=None, repr=False)
    rx_dbm: np.ndarray | None = field(default=None, repr=False)
    overlappers: list["TransmissionEvent"] = field(default_factory=list, repr=False)


def dbm_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(mw, dtype=float))


def tx_duration(config: ScenarioConfig) -> float:
    if config.data_rate <= 0:
        raise ValueError("data_rate must be > 0")
    return config.beacon_size * 8 / config.data_rate + config.phy_overhead


def noise_floor(config: ScenarioConfig) -> float:
    if config.bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    return config.noise_density + 10.0 * math.log10(config.bandwidth) + config.noise_figure


def p_los(distance, config: ScenarioConfig):
    """Probability of line of sight: certain within one block, then exponential decay."""
    d = np.asarray(distance, dtype=float)
    p = np.exp(-(d - config.grid_spacing) / config.los_decay)
    p = np.where(d <= config.grid_spacing, 1.0, p)
    return p if p.ndim else float(p)


def path_loss(distance, los, shadowing_db, config: ScenarioConfig):
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    n = np.where(los, config.n_los, config.n_nlos)
    pl = config.pl_ref + 10.0 * n * np.log10(d) + shadowing_db
    return pl if np.ndim(pl) else float(pl)


def sample_links(distances: np.ndarray, rng: np.random.Generator, config: ScenarioConfig):
    """Vectorised link draw. Returns (los, shadowing_db, path_loss_db) arrays.

    One uniform for the LOS class and one standard normal for shadowing are drawn
    per link, in that order, so the scalar and vector paths consume the stream
    identically.
    """
    d = np.asarray(distances, dtype=float)
    u = rng.random(d.shape)
    z = rng.standard_normal(d.shape)
    los = u < p_los(d, config)
    sigma = np.where(los, config.shadow_los, config.shadow_nlos)
    shadow = z * sigma
    return los, shadow, path_loss(d, los, shadow, config)


def sample_link(distance: float, rng: np.random.Generator, config: ScenarioConfig) -> LinkSample:
    if distance < 0:
        raise ValueError("distance must be >= 0")
    los, shadow, pl = sample_links(np.array([distance]), rng, config)
    return LinkSample(float(distance), bool(los[0]), float(shadow[0]), float(pl[0]))


def received_power(tx_power: float, link: LinkSample | float) -> float:
    pl = link.path_loss_db if isinstance(link, LinkSample) else link
    return tx_power - pl


def decide(signal_dbm, interference_mw, config: ScenarioConfig, noise_dbm: float | None = None):
    """SNR and SIR threshold test; works elementwise on arrays.

    Returns (snr_ok, sir_ok). SIR here is signal over noise plus summed interference.
    """
    nf = noise_floor(config) if noise_dbm is None else noise_dbm
    sig = np.asarray(signal_dbm, dtype=float)
    snr_ok = sig - nf >= config.snr_th
    denom = float(dbm_to_mw(nf)) + np.asarray(interference_mw, dtype=float)
    with np.errstate(divide="ignore"):
        sir = 10.0 * np.log10(dbm_to_mw(sig) / denom)
    return snr_ok, sir >= config.sir_th


def sinr_db(signal_dbm: float, interference_mw: float, config: ScenarioConfig) -> float:
    nf_mw = float(dbm_to_mw(noise_floor(config)))
    return 10.0 * math.log10(float(dbm_to_mw(signal_dbm)) / (nf_mw + interference_mw))


def evaluate_reception(signal: TransmissionEvent, rx_position: Sequence[float],
                       interferers: Sequence[TransmissionEvent], rng: np.random.Generator,
                       config: ScenarioConfig) -> Reception:
    """Decode decision for one receiver, sampling the signal link and every interferer
    link independently. Each interferer counts at full power (worst case)."""
    def dist(p) -> float:
        return math.hypot(p[0] - rx_position[0], p[1] - rx_position[1])

    link = sample_link(dist(signal.position), rng, config)
    sig = received_power(signal.power_dbm, link)
    interf = 0.0
    for other in interferers:
        if other is signal:
            continue
        il = sample_link(dist(other.position), rng, config)
        interf += float(dbm_to_mw(received_power(other.power_dbm, il)))
    snr_ok, sir_ok = decide(sig, interf, config)
    if not snr_ok:
        return Reception.SNR_FAIL
    if not sir_ok:
        return Reception.SIR_FAIL
    return Reception.DELIVERED
