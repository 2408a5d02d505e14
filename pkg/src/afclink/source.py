"""Pulsed spontaneous-parametric-down-conversion pair source.

Every pump pulse (one per clock cycle) produces a Poisson-distributed number
of photon pairs with mean mu.  When the pump passes through both arms of the
preparation interferometer, each pair is emitted in the time-bin entangled
state (|ee> + e^{2 i phi_p}|ll>)/sqrt(2); phi_p is the pump interferometer
phase and enters twice because the pump photon acquires it before splitting.
EARLY_ONLY pumping (no interferometer) emits both photons in the early bin
with no qubit degree of freedom, the configuration used for autocorrelation
measurements.

Randomness: callers hand every sampling function an explicit generator.
cycle_rng derives a counter-based per-cycle stream so cycles can be sampled
independently (and therefore in parallel) with byte-identical results.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import events
from .linalg import Ket, bell_phi_plus

PUMP_BOTH_ARMS = "BOTH_ARMS"
PUMP_EARLY_ONLY = "EARLY_ONLY"
PUMP_MODES = (PUMP_BOTH_ARMS, PUMP_EARLY_ONLY)

MU_WARN_THRESHOLD = 0.5


@dataclass(frozen=True)
class SourceConfig:
    """Source parameters; defaults follow the storage-experiment operating point."""

    mean_pairs_per_pulse: float = 0.016
    rep_period_ps: int = 12_500
    bin_separation_ps: int = 1_400
    pump_mode: str = PUMP_BOTH_ARMS
    pump_phase: float = 0.0
    depolarizing_noise: float = 0.0

    def __post_init__(self):
        if self.mean_pairs_per_pulse < 0.0:
            raise ValueError("mean pair number must be non-negative")
        if self.rep_period_ps <= 0 or self.bin_separation_ps <= 0:
            raise ValueError("periods must be positive")
        if self.rep_period_ps <= 2 * self.bin_separation_ps:
            raise ValueError(
                "rep period must exceed twice the bin separation so both bins "
                "and the analyzer slots fit inside one cycle"
            )
        if self.pump_mode not in PUMP_MODES:
            raise ValueError(f"unknown pump mode {self.pump_mode!r}")
        if not 0.0 <= self.depolarizing_noise <= 1.0:
            raise ValueError("depolarizing_noise must lie in [0, 1]")
        if self.mean_pairs_per_pulse > MU_WARN_THRESHOLD:
            warnings.warn(
                f"mu = {self.mean_pairs_per_pulse} is outside the weakly pumped "
                "regime; multi-pair emission will dominate",
                UserWarning,
                stacklevel=2,
            )

    def joint_state(self) -> Ket | None:
        """The emitted two-photon state, or None for single-mode pumping."""
        if self.pump_mode == PUMP_EARLY_ONLY:
            return None
        return bell_phi_plus(2.0 * self.pump_phase)


@dataclass(frozen=True)
class PairEmission:
    """One emitted pair: where it came from and its joint qubit state."""

    cycle: int
    pair_id: int
    joint_state: Ket | None

    @property
    def single_mode(self) -> bool:
        return self.joint_state is None


def cycle_rng(seed: int, cycle: int) -> np.random.Generator:
    """Counter-derived stream for one cycle: reproducible and independent."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(cycle,)))


def sample_cycle(
    config: SourceConfig, rng: np.random.Generator, cycle: int, first_pair_id: int = 0
) -> list[PairEmission]:
    """Draw the pairs emitted in one pump cycle (Poisson with mean mu)."""
    n = int(rng.poisson(config.mean_pairs_per_pulse))
    state = config.joint_state()
    return [
        PairEmission(cycle=cycle, pair_id=first_pair_id + i, joint_state=state)
        for i in range(n)
    ]


def emit_photon_events(
    pairs: list[PairEmission], config: SourceConfig, rng: np.random.Generator | None = None
) -> list[events.PhotonEvent]:
    """Expand pairs into per-photon events on the two output channels.

    Timestamps sit on the cycle grid; the time-bin content stays in the `bin`
    field (SUPERPOSED until an analyzer resolves it, EARLY for single-mode
    pumping).  rng is accepted for interface symmetry; emission itself is
    deterministic once the pair list is drawn.
    """
    bin_tag = events.BIN_EARLY if config.pump_mode == PUMP_EARLY_ONLY else events.BIN_SUPERPOSED
    out = []
    for pair in pairs:
        t0 = pair.cycle * config.rep_period_ps
        for channel in (events.SIGNAL_794, events.IDLER_1535):
            out.append(
                events.PhotonEvent(
                    cycle=pair.cycle,
                    channel=channel,
                    timestamp_ps=t0,
                    bin=bin_tag,
                    origin=events.ORIGIN_PAIR,
                    pair_id=pair.pair_id,
                )
            )
    return out
