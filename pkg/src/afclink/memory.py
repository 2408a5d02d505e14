"""Atomic-frequency-comb memories: comb profiles, recall efficiency, echoes.

A comb is a periodic train of Gaussian absorption teeth (spacing Delta,
FWHM Delta/F) of depth d1 on a background depth d0.  Light absorbed by the
comb re-emerges after the rephasing time 1/Delta; imperfect periodicity
(e.g. alternating tooth heights, a period-2*Delta structure) adds partial
rephasing at half and at twice that delay.  Frequencies are in MHz
throughout, so storage times come out in ns via 1000/Delta.

The phenomenological recall model used by :func:`apply_memory`:

* transmitted (not absorbed): exp(-mean OD), then the coupling efficiency;
* recalled in echo k: device efficiency times the echo's relative weight
  (squared spectral magnitude, primary peak normalized to 1), times the
  coupling efficiency;
* lost: everything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from . import events
from .errors import FitError

FOUR_LN2 = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class CombSpectrum:
    """A sampled comb profile together with the parameters that shape it."""

    detuning_mhz: np.ndarray
    od: np.ndarray
    delta_mhz: float
    finesse: float
    background_od: float
    tooth_od: float

    def __post_init__(self):
        det = np.asarray(self.detuning_mhz, dtype=float)
        od = np.asarray(self.od, dtype=float)
        if det.ndim != 1 or det.shape != od.shape or det.shape[0] < 8:
            raise ValueError("detuning and OD must be matching 1-d arrays (>= 8 points)")
        steps = np.diff(det)
        if steps.min() <= 0 or (steps.max() - steps.min()) > 1e-6 * steps.max():
            raise ValueError("detuning grid must be strictly increasing and uniform")
        if od.min() < 0.0:
            raise ValueError("optical depth must be non-negative")
        if not self.delta_mhz > 0.0:
            raise ValueError("comb spacing must be positive")
        if not self.finesse > 1.0:
            raise ValueError("comb finesse must exceed 1")
        if self.background_od < 0.0 or self.tooth_od < 0.0:
            raise ValueError("optical depths must be non-negative")
        object.__setattr__(self, "detuning_mhz", det)
        object.__setattr__(self, "od", od)

    @property
    def grid_step_mhz(self) -> float:
        return float(self.detuning_mhz[1] - self.detuning_mhz[0])

    @property
    def bandwidth_mhz(self) -> float:
        return float(self.detuning_mhz[-1] - self.detuning_mhz[0])

    @property
    def storage_time_ns(self) -> float:
        """Rephasing delay 1/Delta, in ns for Delta in MHz."""
        return 1000.0 / self.delta_mhz

    @property
    def tooth_count(self) -> int:
        return int(math.floor(self.bandwidth_mhz / self.delta_mhz))

    @property
    def mean_od(self) -> float:
        return float(np.mean(self.od))


def build_comb(
    delta_mhz: float,
    finesse: float,
    background_od: float,
    tooth_od: float,
    bandwidth_ghz: float,
    grid_step_mhz: float,
    modulation_depth: float = 0.0,
) -> CombSpectrum:
    """Sample an ideal comb: Gaussian teeth of FWHM Delta/F every Delta.

    The grid spans [-bandwidth/2, +bandwidth/2] and must resolve the teeth:
    grid_step <= Delta/(4F).  modulation_depth m in [0, 1) alternates tooth
    heights between d1*(1+m) and d1*(1-m), a period-2*Delta structure that
    produces the half- and double-delay spurious echoes.
    """
    if not delta_mhz > 0.0:
        raise ValueError("delta_mhz must be positive")
    if not finesse > 1.0:
        raise ValueError("finesse must exceed 1")
    if background_od < 0.0 or tooth_od < 0.0:
        raise ValueError("optical depths must be non-negative")
    bandwidth_mhz = bandwidth_ghz * 1000.0
    if bandwidth_mhz < 2.0 * delta_mhz:
        raise ValueError("bandwidth must cover at least two comb periods")
    if not 0.0 <= modulation_depth < 1.0:
        raise ValueError("modulation_depth must lie in [0, 1)")
    if grid_step_mhz <= 0.0 or grid_step_mhz > delta_mhz / (4.0 * finesse):
        raise ValueError(
            f"grid_step_mhz must be in (0, delta/(4*finesse)] = "
            f"(0, {delta_mhz / (4.0 * finesse):.4g}] MHz to resolve the teeth"
        )

    n_points = int(round(bandwidth_mhz / grid_step_mhz)) + 1
    detuning = (np.arange(n_points) - (n_points - 1) / 2.0) * grid_step_mhz
    n_teeth = int(math.floor(bandwidth_mhz / delta_mhz))
    centers = (np.arange(n_teeth) - (n_teeth - 1) / 2.0) * delta_mhz
    heights = tooth_od * (1.0 + modulation_depth * (-1.0) ** np.arange(n_teeth))
    width = delta_mhz / finesse  # FWHM
    # (points, teeth) distance table; fine at these sizes.
    gauss = np.exp(-FOUR_LN2 * ((detuning[:, None] - centers[None, :]) / width) ** 2)
    od = background_od + gauss @ heights
    return CombSpectrum(
        detuning_mhz=detuning,
        od=od,
        delta_mhz=float(delta_mhz),
        finesse=float(finesse),
        background_od=float(background_od),
        tooth_od=float(tooth_od),
    )


def device_efficiency(background_od: float, tooth_od: float, finesse: float) -> float:
    """Recall efficiency of the comb itself (no coupling losses).

    (d1/F)^2 * exp(-d1/F) * exp(-7/F^2) * exp(-d0): absorption/re-emission by
    the effective depth d1/F, tooth-shape dephasing, background absorption.
    """
    if background_od < 0.0 or tooth_od < 0.0:
        raise ValueError("optical depths must be non-negative")
    if not finesse > 1.0:
        raise ValueError("finesse must exceed 1")
    d_eff = tooth_od / finesse
    return d_eff**2 * math.exp(-d_eff) * math.exp(-7.0 / finesse**2) * math.exp(-background_od)


def echo_response(
    comb: CombSpectrum,
    rel_threshold: float = 0.05,
    min_delay_ns: float = 2.0,
    min_separation_ns: float = 2.0,
) -> list[tuple[float, float]]:
    """Echo delays visible in the spectral transmission e^(-OD).

    Returns (delay_ns, relative magnitude) pairs, magnitudes normalized to the
    strongest non-DC peak, sorted by delay.  Peaks below rel_threshold of the
    maximum are dropped; min_delay_ns excludes the direct-transmission lobe at
    zero delay, min_separation_ns suppresses spectral-leakage sidelobes next
    to a real peak.
    """
    transmission = np.exp(-comb.od)
    mag = np.abs(np.fft.rfft(transmission))
    delays_ns = np.fft.rfftfreq(transmission.shape[0], d=comb.grid_step_mhz) * 1000.0
    bin_ns = delays_ns[1] - delays_ns[0]
    distance = max(1, int(round(min_separation_ns / bin_ns)))
    idx, _ = find_peaks(mag, distance=distance)
    idx = idx[delays_ns[idx] >= min_delay_ns]
    if idx.size == 0:
        return []
    top = float(mag[idx].max())
    if top <= 0.0:
        return []
    keep = idx[mag[idx] >= rel_threshold * top]
    return [(float(delays_ns[i]), float(mag[i] / top)) for i in np.sort(keep)]


@dataclass(frozen=True)
class FittedComb:
    """Least-squares comb parameters recovered from a sampled profile."""

    delta_mhz: float
    finesse: float
    background_od: float
    tooth_od: float
    offset_mhz: float
    residual_rms: float


def _comb_model(detuning: np.ndarray, d0, d1, finesse, delta, offset) -> np.ndarray:
    width = delta / finesse
    lo = detuning[0] - 3.0 * width
    hi = detuning[-1] + 3.0 * width
    k_lo = int(math.floor((lo - offset) / delta))
    k_hi = int(math.ceil((hi - offset) / delta))
    centers = offset + delta * np.arange(k_lo, k_hi + 1)
    gauss = np.exp(-FOUR_LN2 * ((detuning[:, None] - centers[None, :]) / width) ** 2)
    return d0 + d1 * gauss.sum(axis=1)


def fit_comb(detuning_mhz, od) -> FittedComb:
    """Fit (d0, d1, F, Delta) to a sampled profile; raises FitError when the
    input carries no resolvable periodic structure."""
    det = np.asarray(detuning_mhz, dtype=float)
    y = np.asarray(od, dtype=float)
    if det.ndim != 1 or det.shape != y.shape or det.shape[0] < 16:
        raise ValueError("detuning and OD must be matching 1-d arrays (>= 16 points)")
    step = float(det[1] - det[0])
    contrast = float(np.ptp(y))
    if contrast <= 1e-9:
        raise FitError("profile is flat; no comb structure to fit")

    # Period seed from the dominant spectral component.
    spec = np.abs(np.fft.rfft(y - y.mean()))
    freqs = np.fft.rfftfreq(y.shape[0], d=step)
    k = int(np.argmax(spec[1:])) + 1
    if spec[k] < 1e-3 * y.shape[0] * contrast / 2.0:
        raise FitError("no dominant periodicity found in the profile")
    delta0 = 1.0 / freqs[k]
    offset0 = float(det[int(np.argmax(y))])
    offset0 = (offset0 + delta0 / 2.0) % delta0 - delta0 / 2.0

    x0 = np.array([max(float(y.min()), 0.0), contrast, 2.0, delta0, offset0])
    lower = [0.0, 1e-6, 1.0 + 1e-6, 0.5 * delta0, offset0 - delta0]
    upper = [np.inf, np.inf, np.inf, 1.5 * delta0, offset0 + delta0]
    x0 = np.clip(x0, lower, upper)

    def residuals(x):
        return _comb_model(det, *x) - y

    result = least_squares(residuals, x0, bounds=(lower, upper), method="trf")
    if not result.success:
        raise FitError(f"comb fit did not converge: {result.message}")
    d0, d1, finesse, delta, offset = result.x
    if d1 < 1e-4 * contrast:
        raise FitError("fitted tooth depth is negligible; no comb structure")
    rms = float(np.sqrt(np.mean(result.fun**2)))
    return FittedComb(
        delta_mhz=float(delta),
        finesse=float(finesse),
        background_od=float(d0),
        tooth_od=float(d1),
        offset_mhz=float(offset),
        residual_rms=rms,
    )


COMB_CSV_HEADER = "detuning_MHz,optical_depth"


def comb_to_csv(comb: CombSpectrum, path) -> None:
    data = np.column_stack([comb.detuning_mhz, comb.od])
    np.savetxt(path, data, delimiter=",", header=COMB_CSV_HEADER, comments="", fmt="%.9g")


def comb_from_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a (detuning, OD) profile; the header line is required."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != COMB_CSV_HEADER:
            raise ValueError(f"expected header {COMB_CSV_HEADER!r}, got {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError("comb CSV must have exactly two columns")
    return data[:, 0], data[:, 1]


@dataclass(frozen=True)
class MemoryConfig:
    """Per-memory recall model: outcome probabilities and echo delays.

    echo_delays holds (delay_ns, weight) pairs with the primary echo at
    weight 1; recall probability for echo k is
    device_efficiency * weight_k * coupling_efficiency.
    """

    coupling_efficiency: float
    device_efficiency: float
    mean_od: float
    echo_delays: tuple[tuple[float, float], ...]
    comb: CombSpectrum | None = None

    def __post_init__(self):
        if not 0.0 <= self.coupling_efficiency <= 1.0:
            raise ValueError("coupling efficiency must lie in [0, 1]")
        if not 0.0 <= self.device_efficiency <= 1.0:
            raise ValueError("device efficiency must lie in [0, 1]")
        if self.mean_od < 0.0:
            raise ValueError("mean optical depth must be non-negative")
        echoes = tuple((float(d), float(w)) for d, w in self.echo_delays)
        if not echoes:
            raise ValueError("at least one echo delay is required")
        weights = np.array([w for _, w in echoes])
        delays = np.array([d for d, _ in echoes])
        if np.any(delays <= 0.0):
            raise ValueError("echo delays must be positive")
        if np.any(weights <= 0.0) or np.any(weights > 1.0 + 1e-12):
            raise ValueError("echo weights must lie in (0, 1]")
        if abs(weights.max() - 1.0) > 1e-9:
            raise ValueError("the primary echo weight must be 1")
        object.__setattr__(self, "echo_delays", echoes)
        total = self.transmitted_probability + sum(self.recall_probabilities)
        if total > 1.0 + 1e-9:
            raise ValueError(f"outcome probabilities sum to {total!r} > 1")

    @classmethod
    def from_comb(
        cls,
        comb: CombSpectrum,
        coupling_efficiency: float,
        rel_threshold: float = 0.05,
        min_delay_ns: float = 2.0,
    ) -> "MemoryConfig":
        """Derive the recall model from a comb: the efficiency formula sets the
        primary recall probability; spectral echo magnitudes (squared) set the
        relative weights of the other delays."""
        eta = device_efficiency(comb.background_od, comb.tooth_od, comb.finesse)
        echoes = echo_response(comb, rel_threshold=rel_threshold, min_delay_ns=min_delay_ns)
        if not echoes:
            raise ValueError("comb shows no echo peaks; cannot build a memory model")
        weighted = tuple((delay, mag**2) for delay, mag in echoes)
        return cls(
            coupling_efficiency=float(coupling_efficiency),
            device_efficiency=float(eta),
            mean_od=comb.mean_od,
            echo_delays=weighted,
            comb=comb,
        )

    @property
    def transmitted_probability(self) -> float:
        return math.exp(-self.mean_od) * self.coupling_efficiency

    @property
    def recall_probabilities(self) -> tuple[float, ...]:
        return tuple(
            self.device_efficiency * w * self.coupling_efficiency for _, w in self.echo_delays
        )

    @property
    def primary_echo_index(self) -> int:
        weights = [w for _, w in self.echo_delays]
        return int(np.argmax(weights))

    @property
    def lost_probability(self) -> float:
        return 1.0 - self.transmitted_probability - sum(self.recall_probabilities)

    def outcome_table(self) -> tuple[list[str], np.ndarray]:
        """Outcome labels and probabilities (sums to 1 by construction)."""
        labels = [events.OUTCOME_TRANSMITTED]
        probs = [self.transmitted_probability]
        for k, p in enumerate(self.recall_probabilities):
            labels.append(events.recalled_token(k))
            probs.append(p)
        labels.append(events.OUTCOME_LOST)
        probs.append(self.lost_probability)
        return labels, np.array(probs)

    def _sampling_table(self) -> tuple[tuple[str, ...], np.ndarray]:
        """Cached (labels, cumulative probabilities) for per-event sampling."""
        cached = getattr(self, "_sampling_cache", None)
        if cached is None:
            labels, probs = self.outcome_table()
            cached = (tuple(labels), np.cumsum(probs))
            object.__setattr__(self, "_sampling_cache", cached)
        return cached

    def echo_delay_ps(self, echo_index: int) -> int:
        return int(round(self.echo_delays[echo_index][0] * 1000.0))


def apply_memory(
    event: events.PhotonEvent, config: MemoryConfig, rng: np.random.Generator
) -> events.PhotonEvent:
    """Sample one memory outcome for one photon.

    Transmitted photons pass unshifted; recalled photons are delayed by the
    echo time, with non-primary echoes tagged SPURIOUS_ECHO; lost photons are
    tagged LOST (downstream stages drop them).  The time-bin qubit itself is
    untouched: storage preserves the superposition.
    """
    labels, cumulative = config._sampling_table()
    u = rng.random()
    idx = int(np.searchsorted(cumulative, u, side="right"))
    idx = min(idx, len(labels) - 1)
    label = labels[idx]
    if label == events.OUTCOME_TRANSMITTED:
        return dc_replace(event, memory_outcome=events.OUTCOME_TRANSMITTED)
    if label == events.OUTCOME_LOST:
        return dc_replace(event, memory_outcome=events.OUTCOME_LOST)
    echo_index = idx - 1
    origin = event.origin
    if echo_index != config.primary_echo_index:
        origin = events.ORIGIN_SPURIOUS_ECHO
    return dc_replace(
        event,
        timestamp_ps=event.timestamp_ps + config.echo_delay_ps(echo_index),
        memory_outcome=events.recalled_token(echo_index),
        origin=origin,
    )
