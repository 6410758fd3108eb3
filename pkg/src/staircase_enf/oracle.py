"""Exact and simulated gain statistics of the staircase branching process.

Each electron entering step ``x`` leaves it as 2 electrons with
probability ``p_x`` and as 1 electron otherwise, independently of all
other electrons.  Starting from a single electron the output count is a
Galton-Watson process in a varying environment whose offspring PGF at
step ``x`` is ``f_x(s) = (1 - p_x) s + p_x s**2``.

Exact mode composes the PGFs, ``G = f_1(f_2(...f_n(s)))``, working from
the last step inwards so each stage is one polynomial square plus a
linear blend of coefficient arrays.

Monte Carlo mode draws one binomial per step per trial.  Trials are cut
into fixed-size chunks; chunk ``i`` draws from

    numpy.random.Generator(PCG64(SeedSequence(seed, spawn_key=(i,))))

and chunk statistics are merged in chunk-index order, so results depend
only on ``(profile, trials, seed, chunk_size)`` and never on the number
of worker processes.  This seed-to-stream mapping is part of the public
contract.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .errors import DomainError, ResourceCapError
from .formulas import StepProfile

__all__ = [
    "EXACT_MAX_STEPS",
    "MC_MAX_STEPS",
    "GainDistribution",
    "SimConfig",
    "EnfEstimate",
    "MomentAccumulator",
    "exact_gain_pmf",
    "enf_from_distribution",
    "mc_simulate",
    "mc_gain_histogram",
    "chunk_generator",
]

EXACT_MAX_STEPS = 24
# counts reach 2**n and must fit in int64
MC_MAX_STEPS = 62

# above this length direct convolution gets slow; switch to FFT
_DIRECT_CONVOLVE_MAX = 1 << 13


@dataclass(frozen=True)
class GainDistribution:
    """Probability masses over integer gains (electrons out per electron in).

    ``counts``/``trials`` are set for empirical distributions so that the
    normalization can be checked exactly.
    """

    gains: np.ndarray
    masses: np.ndarray
    counts: Optional[np.ndarray] = None
    trials: Optional[int] = None

    @property
    def pmf(self) -> dict[int, float]:
        nz = self.masses > 0
        return {int(g): float(m) for g, m in zip(self.gains[nz], self.masses[nz])}

    @property
    def total_mass(self) -> float:
        if self.counts is not None:
            return int(self.counts.sum()) / self.trials
        return float(math.fsum(self.masses))

    @property
    def mean(self) -> float:
        return float(np.dot(self.gains.astype(np.float64), self.masses))

    @property
    def second_moment(self) -> float:
        g = self.gains.astype(np.float64)
        return float(np.dot(g * g, self.masses))

    @property
    def variance(self) -> float:
        g = self.gains.astype(np.float64)
        d = g - self.mean
        return float(np.dot(d * d, self.masses))

    def __len__(self) -> int:
        return len(self.gains)


def _as_profile(profile: StepProfile | Sequence[float]) -> StepProfile:
    return profile if isinstance(profile, StepProfile) else StepProfile(tuple(profile))


def _square(coeffs: np.ndarray) -> np.ndarray:
    if len(coeffs) <= _DIRECT_CONVOLVE_MAX:
        return np.convolve(coeffs, coeffs)
    out = signal.fftconvolve(coeffs, coeffs)
    # FFT round-off can leave tiny negative masses
    np.maximum(out, 0.0, out=out)
    return out


def exact_gain_pmf(profile: StepProfile | Sequence[float]) -> GainDistribution:
    """Exact output-gain distribution of the staircase for one input electron."""
    profile = _as_profile(profile)
    n = profile.n
    if n > EXACT_MAX_STEPS:
        raise ResourceCapError(
            f"exact mode supports at most {EXACT_MAX_STEPS} steps (support 2**n); "
            f"got n={n}, use Monte Carlo instead"
        )
    # coefficient array of s**0 .. s**deg; starts as the identity PGF s
    h = np.array([0.0, 1.0])
    for p in reversed(profile.probs):
        sq = _square(h)
        new = p * sq
        new[: len(h)] += (1.0 - p) * h
        h = new
    gains = np.arange(1, len(h), dtype=np.int64)
    return GainDistribution(gains=gains, masses=h[1:])


def enf_from_distribution(dist: GainDistribution) -> float:
    """``E[g**2] / E[g]**2`` of a gain distribution."""
    if len(dist) == 0 or not dist.masses.any():
        raise DomainError("distribution is empty")
    mean = dist.mean
    if mean <= 0:
        raise DomainError("distribution mean must be positive")
    return 1.0 + dist.variance / (mean * mean)


@dataclass(frozen=True)
class SimConfig:
    trials: int
    seed: int = 0
    chunk_size: int = 1 << 16

    def __post_init__(self) -> None:
        if int(self.trials) != self.trials or self.trials < 1:
            raise DomainError(f"trials must be a positive integer, got {self.trials!r}")
        if int(self.chunk_size) != self.chunk_size or self.chunk_size < 1:
            raise DomainError(
                f"chunk_size must be a positive integer, got {self.chunk_size!r}"
            )
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")

    @property
    def n_chunks(self) -> int:
        return -(-self.trials // self.chunk_size)

    def chunk_bounds(self, index: int) -> tuple[int, int]:
        start = index * self.chunk_size
        return start, min(start + self.chunk_size, self.trials)


class MomentAccumulator:
    """Streaming count, mean and central moment sums up to fourth order.

    Batches are merged with the pairwise update of Chan et al. extended
    to third and fourth moments (Pebay 2008), so merging in a fixed order
    gives reproducible floating-point results.
    """

    __slots__ = ("n", "mean", "m2", "m3", "m4")

    def __init__(self, n=0, mean=0.0, m2=0.0, m3=0.0, m4=0.0):
        self.n = n
        self.mean = mean
        self.m2 = m2
        self.m3 = m3
        self.m4 = m4

    @classmethod
    def from_array(cls, x: np.ndarray) -> "MomentAccumulator":
        x = np.asarray(x, dtype=np.float64)
        if x.size == 0:
            return cls()
        mean = float(x.mean())
        d = x - mean
        d2 = d * d
        return cls(
            int(x.size), mean, float(d2.sum()), float((d2 * d).sum()), float((d2 * d2).sum())
        )

    def push(self, value: float) -> None:
        self.merge(MomentAccumulator(1, float(value)))

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean = other.n, other.mean
            self.m2, self.m3, self.m4 = other.m2, other.m3, other.m4
            return self
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        d_n = delta / n
        m2 = self.m2 + other.m2 + delta * d_n * na * nb
        m3 = (
            self.m3
            + other.m3
            + delta * d_n * d_n * na * nb * (na - nb)
            + 3.0 * d_n * (na * other.m2 - nb * self.m2)
        )
        m4 = (
            self.m4
            + other.m4
            + delta * d_n**3 * na * nb * (na * na - na * nb + nb * nb)
            + 6.0 * d_n * d_n * (na * na * other.m2 + nb * nb * self.m2)
            + 4.0 * d_n * (na * other.m3 - nb * self.m3)
        )
        self.n = n
        self.mean = self.mean + d_n * nb
        self.m2, self.m3, self.m4 = m2, m3, m4
        return self

    @property
    def variance(self) -> float:
        """Unbiased sample variance; 0 for fewer than two samples."""
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


@dataclass(frozen=True)
class EnfEstimate:
    mean_gain: float
    var_gain: float
    enf: float
    std_error_enf: float
    trials: int

    def agrees_with(self, exact_enf: float, sigmas: float = 3.0) -> bool:
        return abs(self.enf - exact_enf) <= sigmas * self.std_error_enf

    @classmethod
    def from_moments(cls, acc: MomentAccumulator) -> "EnfEstimate":
        """ENF ``1 + s**2 / mean**2`` with a delta-method standard error.

        The influence function of ``F = 1 + v / a**2`` at a sample ``g`` is
        ``((g - a)**2 - v) / a**2 - 2 v (g - a) / a**3``; its second moment is

            (mu4 - mu2**2) / a**4 - 4 mu2 mu3 / a**5 + 4 mu2**3 / a**6

        and ``std_error = sqrt(that / N)``.
        """
        n = acc.n
        a = acc.mean
        var = acc.variance
        enf = 1.0 + var / (a * a)
        if n < 2:
            return cls(a, var, enf, math.nan, n)
        mu2, mu3, mu4 = acc.m2 / n, acc.m3 / n, acc.m4 / n
        infl = (mu4 - mu2 * mu2) / a**4 - 4.0 * mu2 * mu3 / a**5 + 4.0 * mu2**3 / a**6
        return cls(a, var, enf, math.sqrt(max(infl, 0.0) / n), n)


def chunk_generator(seed: int, index: int) -> np.random.Generator:
    """The random stream owned by chunk ``index`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _simulate_counts(probs: tuple[float, ...], rng: np.random.Generator, size: int) -> np.ndarray:
    counts = np.ones(size, dtype=np.int64)
    for p in probs:
        if p == 0.0:
            continue
        if p == 1.0:
            counts *= 2
        else:
            counts += rng.binomial(counts, p)
    return counts


def _run_chunk(args):
    probs, seed, index, start, stop, want_hist = args
    counts = _simulate_counts(probs, chunk_generator(seed, index), stop - start)
    acc = MomentAccumulator.from_array(counts)
    hist = np.unique(counts, return_counts=True) if want_hist else None
    return acc, hist


def _run(profile, config: SimConfig, workers: int, want_hist: bool):
    profile = _as_profile(profile)
    if profile.n > MC_MAX_STEPS:
        raise DomainError(f"Monte Carlo supports at most {MC_MAX_STEPS} steps, got {profile.n}")
    if int(workers) != workers or workers < 1:
        raise DomainError(f"workers must be a positive integer, got {workers!r}")
    tasks = [
        (profile.probs, config.seed, i, *config.chunk_bounds(i), want_hist)
        for i in range(config.n_chunks)
    ]
    if workers == 1 or len(tasks) == 1:
        results = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            # map() yields in submission order regardless of completion order
            results = list(pool.map(_run_chunk, tasks))
    acc = MomentAccumulator()
    for chunk_acc, _ in results:
        acc.merge(chunk_acc)
    return acc, [h for _, h in results]


def mc_simulate(
    profile: StepProfile | Sequence[float], config: SimConfig, workers: int = 1
) -> EnfEstimate:
    """Monte Carlo estimate of the staircase ENF from ``config.trials`` runs."""
    acc, _ = _run(profile, config, workers, want_hist=False)
    return EnfEstimate.from_moments(acc)


def mc_gain_histogram(
    profile: StepProfile | Sequence[float], config: SimConfig, workers: int = 1
) -> GainDistribution:
    """Empirical relative frequencies of the simulated output gains."""
    _, hists = _run(profile, config, workers, want_hist=True)
    gains = np.concatenate([h[0] for h in hists])
    counts = np.concatenate([h[1] for h in hists])
    uniq, inverse = np.unique(gains, return_inverse=True)
    totals = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(totals, inverse, counts)
    return GainDistribution(
        gains=uniq, masses=totals / config.trials, counts=totals, trials=config.trials
    )
