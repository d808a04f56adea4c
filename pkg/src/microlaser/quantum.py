"""Number-basis microlaser theory on a truncated photon basis.

The photon-number populations obey a birth-death master equation

    dP_n/dt = r [beta_bar_n P_{n-1} - beta_bar_{n+1} P_n]
              + Gamma_c [(n+1) P_{n+1} - n P_n]

with velocity-averaged emission probabilities beta_bar and a reflecting
truncation (beta_bar_{n_max+1} := 0). Detailed balance gives the steady state
in product form; two-time intensity correlations follow from propagating the
annihilation-collapsed diagonal under the same generator (see
docs/g2_initial_condition.md for the derivation of the initial condition).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    MicrolaserConfig,
    VelocityDistribution,
    averaged_beta_table,
    config_fingerprint,
    injection_rate,
    interaction_time,
)
from .errors import StiffnessError, TruncationError
from .fitting import ExpFit, fit_exp_decay

N_MAX_CAP = 8192
N_MAX_FLOOR = 32
TAIL_FRACTION = 0.01
TAIL_MASS_LIMIT = 1e-10
BEYOND_TRUNCATION_LIMIT = 1e-12
EVOLVE_RTOL = 1e-9
DEFAULT_TAU_POINTS = 200
DEFAULT_TAU_SPAN_LIFETIMES = 5.0


@dataclass(frozen=True)
class PhotonDistribution:
    """Normalized photon-number probability vector with derived moments."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a nonempty 1-d array")
        if np.any(p < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
        p.flags.writeable = False
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def from_weights(cls, weights) -> "PhotonDistribution":
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not (total > 0.0) or not np.isfinite(total):
            raise ValueError("weights must have positive finite total mass")
        return cls(w / total)

    @property
    def n_max(self) -> int:
        return self.probabilities.size - 1

    @property
    def mean(self) -> float:
        return float(np.arange(self.probabilities.size) @ self.probabilities)

    @property
    def variance(self) -> float:
        n = np.arange(self.probabilities.size)
        m = self.mean
        return float((n * n) @ self.probabilities - m * m)

    @property
    def mandel_q(self) -> float | None:
        """(Delta n)^2 / <n> - 1, or None for an empty field."""
        m = self.mean
        if m == 0.0:
            return None
        return self.variance / m - 1.0


def moments(p: PhotonDistribution) -> tuple[float, float, float | None]:
    """(mean, variance, Mandel Q); Q is None when the mean vanishes."""
    return p.mean, p.variance, p.mandel_q


def default_n_max(cfg: MicrolaserConfig) -> int:
    """Truncation policy: 4 * (r / Gamma_c), clamped to [32, 8192]."""
    r = injection_rate(cfg)
    return int(min(N_MAX_CAP, max(N_MAX_FLOOR, math.ceil(4.0 * r / cfg.gamma_c))))


def effective_n_max(cfg: MicrolaserConfig) -> int:
    return cfg.n_max if cfg.n_max is not None else default_n_max(cfg)


def _truncation_report(p: np.ndarray, birth_at_top: float, death_at_top: float):
    """(adequate, tail_mass, beyond_estimate) for a candidate steady vector."""
    n_tail = max(1, int(TAIL_FRACTION * p.size))
    tail_mass = float(p[-n_tail:].sum())
    if death_at_top > 0.0 and birth_at_top < death_at_top:
        ratio = birth_at_top / death_at_top
        beyond = float(p[-1] * ratio / (1.0 - ratio))
    else:
        beyond = math.inf
    adequate = tail_mass < TAIL_MASS_LIMIT and beyond < BEYOND_TRUNCATION_LIMIT
    return adequate, tail_mass, beyond


def steady_state(
    cfg: MicrolaserConfig,
    dist: VelocityDistribution,
    n_max: int | None = None,
) -> PhotonDistribution:
    """Detailed-balance steady state P_n = P_0 prod_k r beta_bar_k / (Gamma_c k).

    Accumulated in log space to dodge overflow, then normalized. If the tail
    check fails at the requested truncation, the basis is doubled once before
    giving up with a TruncationError.
    """
    size = n_max if n_max is not None else effective_n_max(cfg)
    r = injection_rate(cfg)
    for attempt in range(2):
        beta_bar = averaged_beta_table(size, cfg, dist)
        k = np.arange(1, size + 1, dtype=float)
        with np.errstate(divide="ignore"):
            log_ratio = np.log(r * beta_bar) - np.log(cfg.gamma_c * k)
        log_p = np.concatenate(([0.0], np.cumsum(log_ratio)))
        log_p -= log_p.max()
        with np.errstate(divide="ignore"):
            p = np.exp(log_p)
        p /= p.sum()
        adequate, tail_mass, beyond = _truncation_report(
            p, r * beta_bar[-1], cfg.gamma_c * size
        )
        if adequate:
            return PhotonDistribution(p)
        if attempt == 0:
            size *= 2
    raise TruncationError(
        f"steady state not converged at n_max={size}: last-1% tail mass "
        f"{tail_mass:.3e} (limit {TAIL_MASS_LIMIT:.0e}), estimated mass beyond "
        f"truncation {beyond:.3e} (limit {BEYOND_TRUNCATION_LIMIT:.0e}); "
        f"increase n_max"
    )


@dataclass(frozen=True)
class MasterEquationGenerator:
    """Tridiagonal birth-death generator acting on population vectors.

    ``birth[n]`` is the n -> n+1 rate r * beta_bar_{n+1} (zero at the top,
    reflecting truncation); ``death[n]`` = Gamma_c * n. Columns sum to zero
    by construction, so total probability is conserved.
    """

    birth: np.ndarray
    death: np.ndarray
    diag: np.ndarray
    injection_rate: float
    gamma_c: float
    beta_table: np.ndarray

    @property
    def size(self) -> int:
        return self.diag.size

    @property
    def n_max(self) -> int:
        return self.diag.size - 1

    def matvec(self, p: np.ndarray) -> np.ndarray:
        out = self.diag * p
        out[1:] += self.birth[:-1] * p[:-1]
        out[:-1] += self.death[1:] * p[1:]
        return out

    def dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        idx = np.arange(self.n_max)
        a[idx + 1, idx] += self.birth[:-1]
        a[idx, idx + 1] += self.death[1:]
        return a

    def max_rate(self) -> float:
        return float(np.max(-self.diag)) if self.size else 0.0


def build_generator(
    cfg: MicrolaserConfig,
    dist: VelocityDistribution,
    n_max: int | None = None,
) -> MasterEquationGenerator:
    size = n_max if n_max is not None else effective_n_max(cfg)
    r = injection_rate(cfg)
    beta_bar = averaged_beta_table(size, cfg, dist)
    birth = np.zeros(size + 1)
    birth[:-1] = r * beta_bar
    death = cfg.gamma_c * np.arange(size + 1, dtype=float)
    diag = -(birth + death)
    for arr in (birth, death, diag, beta_bar):
        arr.flags.writeable = False
    return MasterEquationGenerator(
        birth=birth, death=death, diag=diag,
        injection_rate=r, gamma_c=cfg.gamma_c, beta_table=beta_bar,
    )


# Dormand-Prince 5(4) coefficients, unrolled in the stepper below.
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656,
)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    _B1 - 5179 / 57600,
    _B3 - 7571 / 16695,
    _B4 - 393 / 640,
    _B5 + 92097 / 339200,
    _B6 - 187 / 2100,
    -1 / 40,
)


def _integrate_checkpointed(
    gen: MasterEquationGenerator,
    y0: np.ndarray,
    times: np.ndarray,
    rtol: float = EVOLVE_RTOL,
) -> np.ndarray:
    """One adaptive Dormand-Prince pass through sorted checkpoint times.

    Returns the state at every requested time (shape len(times) x size).
    Steps are error-controlled at ``rtol`` per step; the stiffness of the
    generator (fastest rate ~ Gamma_c * n_max) shows up only as a step-size
    ceiling, which the controller finds on its own.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("checkpoint times must be a nonempty 1-d array")
    if np.any(np.diff(times) < 0.0) or times[0] < 0.0:
        raise ValueError("checkpoint times must be nondecreasing and nonnegative")

    y = np.array(y0, dtype=float)
    out = np.empty((times.size, y.size))
    idx = 0
    t = 0.0
    while idx < times.size and times[idx] <= t:
        out[idx] = y
        idx += 1
    if idx >= times.size:
        return out

    scale_floor = 1e-30 + rtol * float(np.max(np.abs(y)))
    max_rate = gen.max_rate()
    h = min(
        0.1 / max_rate if max_rate > 0.0 else times[-1],
        times[-1] if times[-1] > 0.0 else 1.0,
    )
    t_end = float(times[-1])
    h_min = max(t_end * 1e-16, 1e-300)
    matvec = gen.matvec
    k1 = matvec(y)  # FSAL: carries f(y) across accepted steps

    while idx < times.size:
        t_target = float(times[idx])
        hit_checkpoint = False
        if t + h >= t_target:
            h_step = t_target - t
            hit_checkpoint = True
        else:
            h_step = h
        if h_step <= 0.0:
            out[idx] = y
            idx += 1
            continue

        k2 = matvec(y + (h_step * _A21) * k1)
        k3 = matvec(y + h_step * (_A31 * k1 + _A32 * k2))
        k4 = matvec(y + h_step * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = matvec(y + h_step * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = matvec(
            y + h_step * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
        )
        y_new = y + h_step * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = matvec(y_new)
        err_vec = h_step * (
            _E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7
        )
        scale = scale_floor + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))

        if err <= 1.0:
            t = t + h_step
            y = y_new
            k1 = k7
            if hit_checkpoint:
                while idx < times.size and times[idx] <= t:
                    out[idx] = y
                    idx += 1
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = max(h_step * factor, h_min)
        else:
            h = h_step * (max(0.1, 0.9 * err ** -0.2) if math.isfinite(err) else 0.1)
            if h < h_min or t + h == t:
                raise StiffnessError(
                    f"step size underflow at t={t:.6e} s (h={h:.3e}, err={err:.3e}); "
                    f"generator max rate {max_rate:.3e} /s",
                    t=t,
                    step=h,
                )
    return out


def evolve(
    gen: MasterEquationGenerator,
    p0,
    t: float,
    rtol: float = EVOLVE_RTOL,
) -> np.ndarray:
    """Propagate dp/dt = A p to time t with adaptive stepping.

    ``p0`` is any nonnegative vector (not necessarily normalized); its total
    mass is conserved by the generator and preserved by the integration to
    well below 1e-9 relative.
    """
    p0 = np.asarray(p0, dtype=float)
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    if p0.shape != (gen.size,):
        raise ValueError(f"p0 must have shape ({gen.size},), got {p0.shape}")
    if np.any(p0 < 0.0):
        raise ValueError("p0 entries must be nonnegative")
    if t == 0.0:
        return p0.copy()
    return _integrate_checkpointed(gen, p0, np.array([t]), rtol=rtol)[0]


@dataclass(frozen=True)
class G2Curve:
    """Theoretical g2(tau) samples with the configuration fingerprint."""

    tau: np.ndarray
    values: np.ndarray
    config_hash: str

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if tau.shape != values.shape or tau.ndim != 1:
            raise ValueError("tau and values must be matching 1-d arrays")
        tau.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "values", values)


def default_tau_grid(cfg: MicrolaserConfig, n_points: int = DEFAULT_TAU_POINTS) -> np.ndarray:
    """Linear grid on [0, 5 / Gamma_c], enough span for all observed tau_c."""
    return np.linspace(0.0, DEFAULT_TAU_SPAN_LIFETIMES / cfg.gamma_c, n_points)


def g2_regression(
    cfg: MicrolaserConfig,
    dist: VelocityDistribution,
    tau_grid=None,
    rtol: float = EVOLVE_RTOL,
) -> G2Curve:
    """g2(tau) from the regression of the annihilation-collapsed diagonal.

    W_m(0) = (m+1) P_{m+1} sums to <n> and evolves under the same generator
    as the populations; then g2(tau) = sum_m m W_m(tau) / <n>^2. One forward
    integration pass serves the whole tau grid via checkpointing.
    """
    p = steady_state(cfg, dist)
    n_mean = p.mean
    if n_mean <= 0.0:
        raise ValueError("g2 undefined: steady state carries no photons")
    gen = build_generator(cfg, dist, n_max=p.n_max)
    taus = (
        np.asarray(tau_grid, dtype=float) if tau_grid is not None else default_tau_grid(cfg)
    )
    w0 = np.zeros(p.n_max + 1)
    w0[:-1] = np.arange(1, p.n_max + 1) * p.probabilities[1:]
    states = _integrate_checkpointed(gen, w0, taus, rtol=rtol)
    n = np.arange(p.n_max + 1, dtype=float)
    values = states @ n / (n_mean * n_mean)
    return G2Curve(tau=taus, values=values, config_hash=config_fingerprint(cfg, dist))


@dataclass(frozen=True)
class G2FitResult:
    """Exponential-decay summary of a g2 curve: g2 = 1 + c0 exp(-tau/tau_c)."""

    c0: float
    tau_c: float | None
    q: float
    fit: ExpFit
    warning: str | None = None


def q_and_tau_from_g2(curve: G2Curve, n_mean: float) -> G2FitResult:
    """Fit 1 + C0 exp(-tau/tau_c) to a theory curve; Q = C0 * <n>.

    Theory curves are mildly multi-exponential; a fit-quality warning is
    attached when the decay envelope is visibly non-monotone or the grid
    spans fewer than three fitted decay times, but the fit still proceeds.
    """
    if n_mean <= 0.0:
        raise ValueError(f"n_mean must be positive, got {n_mean}")
    if curve.tau.size < 10:
        raise ValueError("need at least 10 g2 samples to fit")
    fit = fit_exp_decay(curve.tau, curve.values)
    warning = None
    dev = np.abs(curve.values - 1.0)
    peak = dev.max()
    if peak > 0.0:
        half = dev[curve.tau > 0.5 * curve.tau[-1]]
        if half.size >= 4:
            rough = np.diff(half)
            growth = rough[rough > 1e-3 * peak]
            if growth.size > half.size // 4:
                warning = "g2 deviation from 1 is non-monotone at large tau"
    if fit.tau_c is not None and curve.tau[-1] < 3.0 * fit.tau_c:
        warning = (warning + "; " if warning else "") + (
            "tau grid spans fewer than 3 fitted decay times"
        )
    return G2FitResult(
        c0=fit.c0,
        tau_c=fit.tau_c,
        q=fit.c0 * n_mean,
        fit=fit,
        warning=warning,
    )


@dataclass(frozen=True)
class ValidityReport:
    """Single-atom extrapolation diagnostics.

    ``rabi_angle_ratio`` is g0 t_int / sqrt(<n>); the number-basis theory is
    trustworthy while this is small. ``phase_perturbation`` is the Rabi-angle
    change from a one-photon fluctuation, g0 t_int / sqrt(<n>+1).
    """

    rabi_angle_ratio: float
    phase_perturbation: float
    threshold: float
    questionable: bool


def validity_check(
    cfg: MicrolaserConfig,
    p: PhotonDistribution,
    threshold: float = 0.3,
) -> ValidityReport:
    n_mean = p.mean
    if n_mean <= 0.0:
        raise ValueError("validity check requires a nonempty field (<n> > 0)")
    g_t = cfg.g0 * interaction_time(cfg.v0, cfg.mode_waist)
    ratio = g_t / math.sqrt(n_mean)
    phase = g_t / math.sqrt(n_mean + 1.0)
    return ValidityReport(
        rabi_angle_ratio=ratio,
        phase_perturbation=phase,
        threshold=threshold,
        questionable=ratio > threshold,
    )


def distribution_csv(p: PhotonDistribution, header_lines=()) -> str:
    lines = [f"# {line}" for line in header_lines]
    lines.append("n,probability")
    lines.extend(f"{n},{prob:.17g}" for n, prob in enumerate(p.probabilities))
    return "\n".join(lines) + "\n"


def g2_csv(curve: G2Curve, header_lines=()) -> str:
    lines = [f"# {line}" for line in header_lines]
    lines.append(f"# config_hash = {curve.config_hash}")
    lines.append("tau_seconds,g2")
    lines.extend(
        f"{t:.17g},{v:.17g}" for t, v in zip(curve.tau, curve.values)
    )
    return "\n".join(lines) + "\n"
