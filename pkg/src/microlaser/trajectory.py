"""Stochastic jump-process simulation of the microlaser: the synthetic experiment.

Two competing event types drive the intracavity photon number: excited atoms
arrive as a Poisson process at rate r = <N>/t_int(v0) and deposit a photon
with probability sin^2(sqrt(n+1) g0 t_int(v)) for their sampled velocity v;
the cavity loses photons at the state-dependent rate Gamma_c * n, and each
loss is recorded as a detection with the configured efficiency, routed to one
of two detector channels. Waiting times are sampled exactly (no tau-leaping),
so long runs reproduce the master-equation statistics to sampling error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SQRT_PI, MicrolaserConfig, VelocityDistribution, injection_rate
from .errors import TruncationError
from .quantum import PhotonDistribution, effective_n_max, steady_state
from .streams import TimestampStream

DEFAULT_BURN_IN_LIFETIMES = 20.0


@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulated run: sample path, detector streams, and bookkeeping."""

    seed: int
    config: MicrolaserConfig
    duration: float
    n_basis: int
    initial_n: int
    final_n: int
    path_times: np.ndarray | None
    path_values: np.ndarray | None
    stream1: TimestampStream
    stream2: TimestampStream
    atoms_injected: int
    emissions: int
    decays: int
    detections: int


def simulate(
    cfg: MicrolaserConfig,
    dist: VelocityDistribution,
    duration: float,
    seed: int,
    initial_n: int | None = None,
    record_path: bool = True,
) -> TrajectoryRecord:
    """Exact continuous-time simulation over ``duration`` seconds.

    ``initial_n=None`` draws the starting photon number from the quantum
    steady state, which makes short runs burn-in free; passing an integer
    gives a cold start that is independent of the theory module. All
    randomness comes from one seeded 64-bit generator, so identical
    (seed, config, duration) reproduce identical output.
    """
    if duration <= 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    rng = np.random.default_rng(seed)

    if initial_n is None:
        p0 = steady_state(cfg, dist)
        n_basis = p0.n_max
        cdf = np.cumsum(p0.probabilities)
        n = int(np.searchsorted(cdf, rng.random(), side="right"))
        n = min(n, n_basis)
    else:
        if initial_n < 0:
            raise ValueError(f"initial_n must be >= 0, got {initial_n}")
        n_basis = effective_n_max(cfg)
        if initial_n > n_basis:
            raise TruncationError(
                f"initial_n={initial_n} exceeds basis truncation n_max={n_basis}"
            )
        n = initial_n

    r = injection_rate(cfg)
    gamma_c = cfg.gamma_c
    eta = cfg.detection_efficiency
    split = cfg.splitter_ratio
    g0 = cfg.g0
    waist_term = g0 * SQRT_PI * cfg.mode_waist  # theta(v) = waist_term / v
    delta_velocity = dist.kind == "delta"
    theta_v0 = waist_term / dist.v0

    initial = n
    t = 0.0
    atoms = emissions = decays = detections = 0
    ch1: list[float] = []
    ch2: list[float] = []
    path_t: list[float] = [0.0] if record_path else []
    path_n: list[int] = [n] if record_path else []

    rand = rng.random
    rexp = rng.exponential
    sin = math.sin
    sqrt = math.sqrt

    while True:
        total = r + gamma_c * n
        if total <= 0.0:
            break
        t += rexp(1.0 / total)
        if t >= duration:
            break
        if rand() * total < r:
            atoms += 1
            theta = theta_v0 if delta_velocity else waist_term / dist.sample(rng)
            p_emit = sin(sqrt(n + 1.0) * theta) ** 2
            if rand() < p_emit:
                n += 1
                emissions += 1
                if n >= n_basis:
                    raise TruncationError(
                        f"photon number reached the basis truncation n_max={n_basis} "
                        f"at t={t:.3e} s; raise n_max"
                    )
                if record_path:
                    path_t.append(t)
                    path_n.append(n)
        else:
            n -= 1
            decays += 1
            if record_path:
                path_t.append(t)
                path_n.append(n)
            if eta >= 1.0 or rand() < eta:
                detections += 1
                if rand() < split:
                    ch1.append(t)
                else:
                    ch2.append(t)

    return TrajectoryRecord(
        seed=seed,
        config=cfg,
        duration=duration,
        n_basis=n_basis,
        initial_n=initial,
        final_n=n,
        path_times=np.asarray(path_t) if record_path else None,
        path_values=np.asarray(path_n, dtype=np.int64) if record_path else None,
        stream1=TimestampStream(np.asarray(ch1), channel=1, duration=duration),
        stream2=TimestampStream(np.asarray(ch2), channel=2, duration=duration),
        atoms_injected=atoms,
        emissions=emissions,
        decays=decays,
        detections=detections,
    )


def photon_number_histogram(
    rec: TrajectoryRecord, burn_in: float | None = None
) -> PhotonDistribution:
    """Time-weighted occupancy of the photon-number path after burn-in.

    The default burn-in of 20 cavity lifetimes is generous for steady-state
    starts and adequate for cold starts at desk-scale parameters.
    """
    if rec.path_times is None:
        raise ValueError("record carries no photon-number path (record_path=False)")
    if burn_in is None:
        burn_in = DEFAULT_BURN_IN_LIFETIMES / rec.config.gamma_c
    if rec.duration <= burn_in:
        raise ValueError(
            f"duration {rec.duration:g} s does not exceed burn-in {burn_in:g} s"
        )
    edges = np.append(rec.path_times, rec.duration)
    lo = np.clip(edges[:-1], burn_in, rec.duration)
    hi = np.clip(edges[1:], burn_in, rec.duration)
    weights = hi - lo
    occupancy = np.zeros(rec.n_basis + 1)
    np.add.at(occupancy, rec.path_values, weights)
    return PhotonDistribution.from_weights(occupancy)


def total_variation_distance(p: PhotonDistribution, q: PhotonDistribution) -> float:
    """TV distance between two photon distributions, padding the shorter."""
    size = max(p.probabilities.size, q.probabilities.size)
    a = np.zeros(size)
    b = np.zeros(size)
    a[: p.probabilities.size] = p.probabilities
    b[: q.probabilities.size] = q.probabilities
    return 0.5 * float(np.abs(a - b).sum())
