"""Statistical estimators: cross-correlation, state reconstruction, metrics.

The reconstruction parameterizes a density matrix through a lower-triangular
factor (see linalg.density_from_params) and minimizes either a
sigma-weighted squared residual on measured joint probabilities or a
Poisson negative log-likelihood on counts.  Both objectives share one
analytic gradient: with rho = T^H T / s, s = tr(T^H T),

    d p_k / d conj(T) = (T (P_k - p_k I)) / s

so the Wirtinger gradient of the objective is T (G - (c.p) I)/s with
G = sum_k c_k P_k and c_k the per-row objective derivative d f / d p_k.
"""

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import optimize, signal, stats

from .detection import CoincidenceHistogram, coincidence_rate
from .errors import EstimationError, UndefinedEstimateError
from .linalg import (
    DensityMatrix,
    ProjectorSetting,
    bell_phi_plus,
    density_from_params,
    hermitian_eigensystem,
    matrix_sqrt_psd,
    projector,
)

DEFAULT_SIDE_PEAKS = tuple(range(-5, 0)) + tuple(range(1, 6))
MLE_TOL = 1e-10
MLE_STARTS = 20
MC_MIN_TRIALS = 100
MC_MAX_FAILURE_FRACTION = 0.2

_PHI_PLUS = bell_phi_plus().density()

TOMOGRAPHY_CSV_HEADER = ("setting_a", "setting_b", "probability", "sigma")


# ---------------------------------------------------------------------------
# Cross-correlation


@dataclass(frozen=True)
class G2Estimate:
    value: float
    sigma: float
    peak_counts: int
    reference_counts: int
    n_references: int


def g2_cross(
    hist: CoincidenceHistogram,
    delay_ps: int = 0,
    n_values: Sequence[int] | None = None,
    rep_period_ps: int = 12_500,
    peak_halfwidth_ps: int = 500,
) -> G2Estimate:
    """Normalized cross-correlation at `delay_ps`.

    The peak rate is divided by the mean rate of the accidental peaks offset
    by n repetition periods; uncorrelated channels therefore give 1.  The
    uncertainty follows from Poisson counting on both numerator and the
    pooled reference counts.
    """
    if n_values is None:
        n_values = DEFAULT_SIDE_PEAKS
    n_values = tuple(int(n) for n in n_values)
    if not n_values:
        raise ValueError("need at least one reference peak")
    if 0 in n_values:
        raise ValueError("reference peaks must exclude n = 0")
    peak = coincidence_rate(hist, delay_ps, peak_halfwidth_ps)
    references = [
        coincidence_rate(hist, delay_ps + n * rep_period_ps, peak_halfwidth_ps)
        for n in n_values
    ]
    total_ref = int(sum(references))
    if total_ref == 0:
        raise UndefinedEstimateError("all reference peaks are empty")
    mean_ref = total_ref / len(references)
    value = peak / mean_ref
    sigma = value * math.sqrt(1.0 / peak + 1.0 / total_ref) if peak > 0 else 0.0
    return G2Estimate(value, sigma, peak, total_ref, len(references))


# ---------------------------------------------------------------------------
# Tomography input


@dataclass(frozen=True)
class TomographyRow:
    """One measured joint probability with its uncertainty.

    `trials` carries the number of measurement repetitions when the row came
    from counted data; it is required by the Poisson weighting.
    """

    setting_a: ProjectorSetting
    setting_b: ProjectorSetting
    probability: float
    sigma: float
    trials: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability!r} outside [0, 1]")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if self.trials is not None and self.trials <= 0:
            raise ValueError("trials must be positive when given")


NORMALIZATION_CONDITIONAL = "conditional"


@dataclass(frozen=True)
class TomographyInput:
    """Measurement rows plus the convention their probabilities follow.

    `conditional` means each probability is P(joint outcome | measurement
    basis), so the four outcomes of one full basis sum to about one and the
    model prediction is trace(rho * Pa (x) Pb) with no extra scaling.
    """

    rows: tuple[TomographyRow, ...]
    normalization: str = NORMALIZATION_CONDITIONAL

    def __post_init__(self):
        if self.normalization != NORMALIZATION_CONDITIONAL:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "rows", tuple(self.rows))


def informationally_complete_pairs() -> list[tuple[ProjectorSetting, ProjectorSetting]]:
    """Both ports of three analyzer axes per arm: 36 pairs of rank 16."""
    one_arm = [
        ProjectorSetting.z(+1),
        ProjectorSetting.z(-1),
        ProjectorSetting.x(+1),
        ProjectorSetting.x(-1),
        ProjectorSetting.y(+1),
        ProjectorSetting.y(-1),
    ]
    return [(a, b) for a in one_arm for b in one_arm]


def synthesize_input(
    rho: DensityMatrix,
    pairs: Sequence[tuple[ProjectorSetting, ProjectorSetting]],
    sigma: float,
) -> TomographyInput:
    """Exact model probabilities for the given settings, tagged with `sigma`."""
    rows = []
    for a, b in pairs:
        p = float(np.real(np.trace(rho.matrix @ np.kron(projector(a), projector(b)))))
        rows.append(TomographyRow(a, b, min(max(p, 0.0), 1.0), sigma))
    return TomographyInput(tuple(rows))


def tomography_to_csv(tin: TomographyInput, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TOMOGRAPHY_CSV_HEADER)
        for row in tin.rows:
            writer.writerow(
                [
                    row.setting_a.token(),
                    row.setting_b.token(),
                    f"{row.probability:.10g}",
                    f"{row.sigma:.10g}",
                ]
            )


def tomography_from_csv(path) -> TomographyInput:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise ValueError(f"{path}: empty tomography file") from None
        if header != TOMOGRAPHY_CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = []
        for line_no, raw in enumerate(reader, start=2):
            if not raw:
                continue
            try:
                token_a, token_b, prob, sig = raw
                rows.append(
                    TomographyRow(
                        ProjectorSetting.from_token(token_a),
                        ProjectorSetting.from_token(token_b),
                        float(prob),
                        float(sig),
                    )
                )
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: no measurement rows")
    return TomographyInput(tuple(rows))


# ---------------------------------------------------------------------------
# Maximum-likelihood reconstruction

WEIGHTING_GAUSSIAN = "gaussian"
WEIGHTING_POISSON = "poisson"

# Parameter index -> (row, column, takes imaginary part) of the triangular
# factor; must match linalg.density_from_params.
_PARAM_SLOTS = [
    (0, 0, False),
    (1, 1, False),
    (2, 2, False),
    (3, 3, False),
    (1, 0, False),
    (1, 0, True),
    (2, 0, False),
    (2, 0, True),
    (2, 1, False),
    (2, 1, True),
    (3, 0, False),
    (3, 0, True),
    (3, 1, False),
    (3, 1, True),
    (3, 2, False),
    (3, 2, True),
]


@dataclass(frozen=True)
class _MleData:
    effects: np.ndarray  # (n, 4, 4)
    measured: np.ndarray  # (n,)
    weights: np.ndarray | None  # gaussian weighting
    counts: np.ndarray | None  # poisson weighting
    trials: np.ndarray | None


def _build_mle_data(tin: TomographyInput, weighting: str) -> _MleData:
    if not tin.rows:
        raise ValueError("tomography input has no rows")
    effects = np.stack(
        [np.kron(projector(r.setting_a), projector(r.setting_b)) for r in tin.rows]
    )
    measured = np.array([r.probability for r in tin.rows])
    if weighting == WEIGHTING_GAUSSIAN:
        sigmas = np.array([r.sigma for r in tin.rows])
        positive = sigmas[sigmas > 0.0]
        # Zero-sigma rows are exact in resampling; give them the tightest
        # available finite weight instead of an infinite one.
        fallback = positive.min() if positive.size else 1.0
        eff_sigma = np.where(sigmas > 0.0, sigmas, fallback)
        weights = 1.0 / (2.0 * eff_sigma**2)
        return _MleData(effects, measured, weights, None, None)
    if weighting == WEIGHTING_POISSON:
        if any(r.trials is None for r in tin.rows):
            raise ValueError("poisson weighting needs `trials` on every row")
        trials = np.array([float(r.trials) for r in tin.rows])
        counts = np.round(measured * trials)
        return _MleData(effects, measured, None, counts, trials)
    raise ValueError(f"unknown weighting {weighting!r}")


def _triangular_factor(t: np.ndarray) -> np.ndarray:
    tm = np.zeros((4, 4), dtype=complex)
    for i, (a, b, imag) in enumerate(_PARAM_SLOTS):
        tm[a, b] += 1j * t[i] if imag else t[i]
    return tm


def _objective(t: np.ndarray, data: _MleData) -> tuple[float, np.ndarray]:
    tm = _triangular_factor(t)
    ssq = float(np.dot(t, t))
    if ssq < 1e-300:
        raise FloatingPointError("parameter vector collapsed to zero")
    rho = (tm.conj().T @ tm) / ssq
    probs = np.einsum("kij,ji->k", data.effects, rho).real
    if data.weights is not None:
        resid = probs - data.measured
        f = float(np.dot(data.weights, resid**2))
        dfdp = 2.0 * data.weights * resid
    else:
        p = np.clip(probs, 1e-12, None)
        f = float(np.sum(data.trials * p - data.counts * np.log(p)))
        dfdp = data.trials - data.counts / p
    g = np.einsum("k,kij->ij", dfdp, data.effects)
    m = (tm @ (g - np.dot(dfdp, probs) * np.eye(4))) / ssq
    grad = np.empty(16)
    for i, (a, b, imag) in enumerate(_PARAM_SLOTS):
        grad[i] = 2.0 * (m[a, b].imag if imag else m[a, b].real)
    # The state only depends on the ray of t, leaving the objective flat
    # along it; pinning the norm removes that degeneracy for the optimizer
    # without moving the optimal state.
    f += (ssq - 1.0) ** 2
    grad += 4.0 * (ssq - 1.0) * t
    return f, grad


def mle_objective(
    t: np.ndarray, tin: TomographyInput, weighting: str = WEIGHTING_GAUSSIAN
) -> tuple[float, np.ndarray]:
    """Objective value and analytic gradient at parameter vector `t`."""
    return _objective(np.asarray(t, dtype=float), _build_mle_data(tin, weighting))


@dataclass(frozen=True)
class TomographyResult:
    rho: DensityMatrix
    residual: float
    params: np.ndarray
    n_converged: int


def _check_rank(effects: np.ndarray) -> None:
    flat = effects.reshape(effects.shape[0], -1)
    rank = np.linalg.matrix_rank(flat)
    if rank < 16:
        raise ValueError(
            f"measurement settings span rank {rank} < 16; state not identifiable"
        )


_PAULI_ONE = (
    np.eye(2, dtype=complex),
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)
_PAIR_BASIS = [np.kron(a, b) for a in _PAULI_ONE for b in _PAULI_ONE]


def _params_from_state(rho: np.ndarray) -> np.ndarray:
    """Invert density_from_params via a flipped Cholesky factorization."""
    flip = np.eye(4)[::-1]
    chol = np.linalg.cholesky(flip @ rho @ flip)
    upper = flip @ chol @ flip  # rho = upper @ upper^H
    tri = upper.conj().T
    t = np.empty(16)
    for i, (a, b, imag) in enumerate(_PARAM_SLOTS):
        t[i] = tri[a, b].imag if imag else tri[a, b].real
    return t


def _linear_inversion_start(data: _MleData) -> np.ndarray | None:
    """Least-squares state estimate projected into the state space.

    Exact or near-exact data puts this start at (or next to) the optimum,
    which the boundary-hugging likelihood landscape rewards: random starts
    alone crawl when the target state is nearly rank deficient.
    """
    n = data.effects.shape[0]
    design = np.empty((n, 15))
    base = np.empty(n)
    for k in range(n):
        base[k] = np.trace(data.effects[k]).real / 4.0
        for j in range(1, 16):
            design[k, j - 1] = np.trace(data.effects[k] @ _PAIR_BASIS[j]).real
    try:
        coef, _, _, _ = np.linalg.lstsq(design, data.measured - base, rcond=None)
        rho = np.eye(4, dtype=complex) / 4.0
        for j in range(1, 16):
            rho = rho + coef[j - 1] * _PAIR_BASIS[j]
        w, v = hermitian_eigensystem(rho)
        w = np.clip(w, 1e-6, None)
        rho = (v * (w / w.sum())) @ v.conj().T
        return _params_from_state(rho)
    except np.linalg.LinAlgError:
        return None


def _run_mle(data: _MleData, starts: list[np.ndarray], tol: float):
    best = None
    n_converged = 0
    for x0 in starts:
        res = optimize.minimize(
            _objective,
            x0,
            args=(data,),
            jac=True,
            method="L-BFGS-B",
            options={"ftol": tol, "gtol": 1e-10, "maxiter": 2000},
        )
        if res.success or np.max(np.abs(res.jac)) <= 1e-6 * (1.0 + abs(res.fun)):
            n_converged += 1
        if best is None or res.fun < best.fun:
            best = res
    return best, n_converged


def tomography_mle(
    tin: TomographyInput,
    n_starts: int = MLE_STARTS,
    seed: int = 0,
    weighting: str = WEIGHTING_GAUSSIAN,
    tol: float = MLE_TOL,
) -> TomographyResult:
    """Best-fit density matrix by multi-start local likelihood optimization."""
    data = _build_mle_data(tin, weighting)
    _check_rank(data.effects)
    rng = np.random.default_rng(seed)
    # A data-driven start, a flat-state start, then randomized ones.
    starts = []
    seeded = _linear_inversion_start(data)
    if seeded is not None:
        starts.append(seeded)
    starts.append(np.array([0.5, 0.5, 0.5, 0.5] + [0.0] * 12))
    while len(starts) < max(int(n_starts), 1):
        starts.append(rng.standard_normal(16))
    starts = starts[: max(int(n_starts), 1)]
    best, n_converged = _run_mle(data, starts, tol)
    if n_converged == 0:
        raise EstimationError(
            f"no start converged; best residual {best.fun!r}"
        )
    return TomographyResult(
        rho=DensityMatrix(density_from_params(best.x)),
        residual=float(best.fun),
        params=np.array(best.x),
        n_converged=n_converged,
    )


# ---------------------------------------------------------------------------
# Entanglement and distance metrics

_SIGMA_Y_PAIR = np.kron(
    np.array([[0.0, -1.0j], [1.0j, 0.0]]), np.array([[0.0, -1.0j], [1.0j, 0.0]])
)


def _as_pair_density(rho: DensityMatrix) -> np.ndarray:
    if rho.dim != 4:
        raise ValueError("a two-qubit density matrix is required")
    return rho.matrix


_PURE_PURITY_TOL = 1e-12


def _pure_component(m: np.ndarray) -> np.ndarray | None:
    """Dominant eigenvector if the state is pure to within round-off."""
    if np.trace(m @ m).real < 1.0 - _PURE_PURITY_TOL:
        return None
    _, v = hermitian_eigensystem(m)
    return v[:, 0]


def concurrence(rho: DensityMatrix) -> float:
    """Wootters concurrence of a two-qubit state."""
    m = _as_pair_density(rho)
    psi = _pure_component(m)
    if psi is not None:
        # Exact rank-one formula; the matrix-root chain loses digits here.
        return float(np.abs(psi @ (_SIGMA_Y_PAIR @ psi)))
    flipped = _SIGMA_Y_PAIR @ m.conj() @ _SIGMA_Y_PAIR
    root = matrix_sqrt_psd(m)
    inner = root @ flipped @ root
    w, _ = hermitian_eigensystem((inner + inner.conj().T) / 2.0)
    lams = np.sqrt(np.clip(w, 0.0, None))
    return max(0.0, float(lams[0] - lams[1] - lams[2] - lams[3]))


def eof_from_concurrence(c: float) -> float:
    if not -1e-12 <= c <= 1.0 + 1e-12:
        raise ValueError("concurrence must lie in [0, 1]")
    c = min(max(c, 0.0), 1.0)
    x = 0.5 + 0.5 * math.sqrt(1.0 - c * c)
    if x >= 1.0 - 1e-15:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def entanglement_of_formation(rho: DensityMatrix) -> float:
    return eof_from_concurrence(concurrence(rho))


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """(trace sqrt(sqrt(rho) sigma sqrt(rho)))^2, symmetric in its arguments."""
    if rho.dim != sigma.dim:
        raise ValueError("states must share a dimension")
    # Rank-one arguments admit the exact overlap form <psi|other|psi>.
    for pure, other in ((rho, sigma), (sigma, rho)):
        psi = _pure_component(pure.matrix)
        if psi is not None:
            value = float((psi.conj() @ (other.matrix @ psi)).real)
            return min(max(value, 0.0), 1.0)
    root = matrix_sqrt_psd(rho.matrix)
    inner = root @ sigma.matrix @ root
    overlap_root = matrix_sqrt_psd((inner + inner.conj().T) / 2.0)
    value = float(np.trace(overlap_root).real) ** 2
    return min(max(value, 0.0), 1.0)


def purity(rho: DensityMatrix) -> float:
    return float(np.trace(rho.matrix @ rho.matrix).real)


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    if rho.dim != sigma.dim:
        raise ValueError("states must share a dimension")
    w, _ = hermitian_eigensystem(rho.matrix - sigma.matrix)
    return 0.5 * float(np.abs(w).sum())


# ---------------------------------------------------------------------------
# Correlators and the Bell sum


def correlation_coefficient(c_same: int, c_diff: int) -> tuple[float, float]:
    """(C_same - C_diff)/(C_same + C_diff) with binomial uncertainty."""
    if c_same < 0 or c_diff < 0:
        raise ValueError("counts must be nonnegative")
    total = c_same + c_diff
    if total == 0:
        raise UndefinedEstimateError("no coincidences in either port pairing")
    e = (c_same - c_diff) / total
    p_hat = c_same / total
    sigma = 2.0 * math.sqrt(p_hat * (1.0 - p_hat) / total)
    return e, sigma


def _observable(setting: ProjectorSetting) -> np.ndarray:
    return projector(replace(setting, port=+1)) - projector(replace(setting, port=-1))


def born_correlation(
    rho: DensityMatrix, setting_a: ProjectorSetting, setting_b: ProjectorSetting
) -> float:
    """Expectation of the +-1 observable pair on `rho`."""
    obs = np.kron(_observable(setting_a), _observable(setting_b))
    return float(np.trace(_as_pair_density(rho) @ obs).real)


@dataclass(frozen=True)
class ChshSettings:
    a: ProjectorSetting
    a_prime: ProjectorSetting
    b: ProjectorSetting
    b_prime: ProjectorSetting

    @classmethod
    def default(cls) -> "ChshSettings":
        return cls(
            a=ProjectorSetting.x(),
            a_prime=ProjectorSetting.y(),
            b=ProjectorSetting("XPY"),
            b_prime=ProjectorSetting("XMY"),
        )

    def pairs(self) -> tuple[tuple[ProjectorSetting, ProjectorSetting], ...]:
        """Setting pairs in correlator order: ab, ab', a'b, a'b'."""
        return (
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        )


@dataclass(frozen=True)
class ChshEstimate:
    value: float
    sigma: float
    minus_slot: int


def chsh_s(e_values: Sequence[float], sigmas: Sequence[float]) -> ChshEstimate:
    """Bell sum |E1 + E2 + E3 + E4 - 2*E_minus| with quadrature uncertainty.

    One correlator enters with a minus sign; the slot is chosen to maximize
    |S|, which keeps every candidate bounded by 2 for local models while
    matching the published sign convention of the measured quadruples.
    """
    e = [float(v) for v in e_values]
    s = [float(v) for v in sigmas]
    if len(e) != 4 or len(s) != 4:
        raise ValueError("need exactly four correlators and four uncertainties")
    total = sum(e)
    candidates = [abs(total - 2.0 * e_i) for e_i in e]
    slot = int(np.argmax(candidates))
    sigma = math.sqrt(sum(v * v for v in s))
    return ChshEstimate(candidates[slot], sigma, slot)


# ---------------------------------------------------------------------------
# Monte-Carlo uncertainty propagation

METRIC_FUNCTIONS: dict[str, Callable[[DensityMatrix], float]] = {
    "fidelity_phi_plus": lambda rho: fidelity(rho, _PHI_PLUS),
    "purity": purity,
    "concurrence": concurrence,
    "entanglement_of_formation": entanglement_of_formation,
}


def _resolve_metric(metric) -> Callable[[DensityMatrix], float]:
    if callable(metric):
        return metric
    if metric in METRIC_FUNCTIONS:
        return METRIC_FUNCTIONS[metric]
    raise ValueError(f"unknown metric {metric!r}")


def resample_rows(tin: TomographyInput, rng: np.random.Generator) -> TomographyInput:
    """Redraw each probability from its Gaussian truncated to [0, 1]."""
    probs = np.array([r.probability for r in tin.rows])
    sigmas = np.array([r.sigma for r in tin.rows])
    drawn = probs.copy()
    mask = sigmas > 0.0
    if mask.any():
        a = (0.0 - probs[mask]) / sigmas[mask]
        b = (1.0 - probs[mask]) / sigmas[mask]
        drawn[mask] = stats.truncnorm.rvs(
            a, b, loc=probs[mask], scale=sigmas[mask], random_state=rng
        )
    rows = [
        replace(row, probability=float(p)) for row, p in zip(tin.rows, drawn)
    ]
    return TomographyInput(tuple(rows), tin.normalization)


def monte_carlo_uncertainty(
    tin: TomographyInput,
    trials: int,
    metric,
    seed: int = 0,
    weighting: str = WEIGHTING_GAUSSIAN,
    n_starts: int = MLE_STARTS,
) -> tuple[float, float]:
    """Mean and standard deviation of `metric` under input resampling.

    Each trial redraws the measured probabilities within their uncertainties,
    refits the state (warm-started from the base fit plus one fresh random
    start) and evaluates the metric.  More than 20% failed trials aborts.
    """
    if trials < MC_MIN_TRIALS:
        raise ValueError(f"at least {MC_MIN_TRIALS} trials required, got {trials}")
    metric_fn = _resolve_metric(metric)
    base = tomography_mle(tin, n_starts=n_starts, seed=seed, weighting=weighting)
    if all(r.sigma == 0.0 for r in tin.rows):
        # Degenerate resampling: every trial sees identical data.
        return float(metric_fn(base.rho)), 0.0
    data_template = _build_mle_data(tin, weighting)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    values = []
    failures = 0
    for _ in range(trials):
        resampled = resample_rows(tin, rng)
        data = _MleData(
            data_template.effects,
            np.array([r.probability for r in resampled.rows]),
            data_template.weights,
            np.round(np.array([r.probability for r in resampled.rows]) * data_template.trials)
            if data_template.trials is not None
            else None,
            data_template.trials,
        )
        starts = [base.params.copy(), rng.standard_normal(16)]
        best, n_converged = _run_mle(data, starts, MLE_TOL)
        if n_converged == 0:
            failures += 1
            continue
        try:
            values.append(float(metric_fn(DensityMatrix(density_from_params(best.x)))))
        except Exception:
            failures += 1
    if failures > MC_MAX_FAILURE_FRACTION * trials:
        raise EstimationError(
            f"{failures}/{trials} Monte-Carlo trials failed; results unreliable"
        )
    arr = np.array(values)
    return float(arr.mean()), float(arr.std(ddof=1))


# ---------------------------------------------------------------------------
# Fringe visibility


@dataclass(frozen=True)
class VisibilityFitResult:
    visibility: float
    phase_offset: float
    mean_level: float
    visibility_sigma: float
    phase_sigma: float
    mean_sigma: float
    phase_identifiable: bool


def visibility_fit(sweep: Sequence[tuple[float, float]]) -> VisibilityFitResult:
    """Fit N(theta) = N0 (1 + V cos(theta - theta0)) to a phase sweep.

    The model is linear in (N0, N0 V cos(theta0), N0 V sin(theta0)), so the
    fit is a plain least-squares solve; uncertainties come from the residual
    variance.  When the fitted fringe amplitude is consistent with zero the
    phase offset is flagged as unidentifiable.
    """
    pts = [(float(t), float(c)) for t, c in sweep]
    if len(pts) < 6:
        raise ValueError("need at least 6 phase points")
    thetas = np.array([p[0] for p in pts])
    counts = np.array([p[1] for p in pts])
    if thetas.max() - thetas.min() <= math.pi:
        raise ValueError("phase sweep must span more than pi")
    design = np.column_stack([np.ones_like(thetas), np.cos(thetas), np.sin(thetas)])
    coef, _, rank, _ = np.linalg.lstsq(design, counts, rcond=None)
    if rank < 3:
        from .errors import FitError

        raise FitError("phase sweep design is rank deficient")
    n0, a, b = coef
    if n0 <= 0.0:
        from .errors import FitError

        raise FitError("fitted mean level is not positive")
    resid = counts - design @ coef
    dof = len(pts) - 3
    noise_var = float(resid @ resid) / dof
    cov = noise_var * np.linalg.inv(design.T @ design)
    amp = math.hypot(a, b)
    visibility = min(max(amp / n0, 0.0), 1.0)
    if amp > 0.0:
        g_amp = np.array([0.0, a / amp, b / amp])
        g_vis = np.array([-amp / n0**2, a / (amp * n0), b / (amp * n0)])
        g_phase = np.array([0.0, -b / amp**2, a / amp**2])
        amp_sigma = math.sqrt(max(g_amp @ cov @ g_amp, 0.0))
        vis_sigma = math.sqrt(max(g_vis @ cov @ g_vis, 0.0))
        phase_sigma = math.sqrt(max(g_phase @ cov @ g_phase, 0.0))
    else:
        amp_sigma = math.sqrt(max(cov[1, 1], cov[2, 2], 0.0))
        vis_sigma = amp_sigma / n0
        phase_sigma = math.pi
    identifiable = amp > 3.0 * amp_sigma and visibility > 1e-9
    return VisibilityFitResult(
        visibility=visibility,
        phase_offset=math.atan2(b, a),
        mean_level=float(n0),
        visibility_sigma=vis_sigma,
        phase_sigma=phase_sigma,
        mean_sigma=math.sqrt(max(cov[0, 0], 0.0)),
        phase_identifiable=identifiable,
    )


# ---------------------------------------------------------------------------
# Efficiency bookkeeping and histogram peaks


class Efficiencies(NamedTuple):
    system: float
    coupling: float
    device: float


def efficiencies(r_in: float, r_out: float, p_in: float, p_out: float) -> Efficiencies:
    """System (rate ratio), coupling (power ratio) and device efficiencies."""
    if r_in <= 0.0:
        raise ValueError("input rate must be positive")
    if p_in <= 0.0:
        raise ValueError("input power must be positive")
    system = r_out / r_in
    coupling = p_out / p_in
    if coupling <= 0.0:
        raise ValueError("coupling efficiency is zero; device efficiency undefined")
    return Efficiencies(system, coupling, system / coupling)


@dataclass(frozen=True)
class HistogramPeak:
    delay_ps: int
    count: int


def find_histogram_peaks(
    hist: CoincidenceHistogram,
    min_height_fraction: float = 0.1,
    min_separation_ps: int = 2_000,
) -> list[HistogramPeak]:
    """Locate local maxima above a fraction of the tallest bin."""
    counts = hist.counts.astype(float)
    if counts.max() <= 0:
        return []
    distance = max(1, int(min_separation_ps // hist.bin_width_ps))
    idx, _ = signal.find_peaks(
        counts, height=min_height_fraction * counts.max(), distance=distance
    )
    centers = hist.bin_starts() + hist.bin_width_ps // 2
    return [HistogramPeak(int(centers[i]), int(hist.counts[i])) for i in idx]


# ---------------------------------------------------------------------------
# Aggregate report


@dataclass(frozen=True)
class MetricsReport:
    """Percent-scale state metrics with their Monte-Carlo uncertainties."""

    entanglement_of_formation: tuple[float, float]
    purity: tuple[float, float]
    fidelity_phi_plus: tuple[float, float]
    input_output_fidelity: tuple[float, float]

    def __post_init__(self):
        for name in (
            "entanglement_of_formation",
            "purity",
            "fidelity_phi_plus",
            "input_output_fidelity",
        ):
            value, sigma = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} value {value!r} outside [0, 100] percent")
            if sigma < 0.0:
                raise ValueError(f"{name} uncertainty must be nonnegative")

    def to_json(self) -> str:
        payload = {
            name: {"value": getattr(self, name)[0], "sigma": getattr(self, name)[1]}
            for name in (
                "entanglement_of_formation",
                "purity",
                "fidelity_phi_plus",
                "input_output_fidelity",
            )
        }
        return json.dumps(payload, indent=2)
