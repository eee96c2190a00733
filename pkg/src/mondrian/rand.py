"""Seedable random streams and the few distributions tree sampling needs.

Every tree owns one :class:`RngStream`.  A stream is a numpy ``PCG64``
generator keyed by ``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`,
so tree ``i`` of a forest seeded with ``s`` always sees the same draws no
matter in which order (or in which process) the trees are trained.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "RngStream",
    "sample_exponential",
    "sample_categorical_proportional",
    "sample_uniform_interval",
    "expected_truncated_discount",
]


class RngStream:
    """A single-owner stream of uniform and exponential variates.

    Subclasses only need to provide :meth:`random` and
    :meth:`standard_exponential`; tests use that to inject scripted draws.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def random(self) -> float:
        """Uniform draw on [0, 1)."""
        return self._gen.random()

    def standard_exponential(self) -> float:
        return self._gen.standard_exponential()

    def random_array(self, size: int) -> np.ndarray:
        return self._gen.random(size)

    def standard_exponential_array(self, size: int) -> np.ndarray:
        return self._gen.standard_exponential(size)

    def get_state(self) -> dict:
        return {
            "seed": self.seed,
            "stream_id": self.stream_id,
            "bit_generator": self._gen.bit_generator.state,
        }

    @classmethod
    def from_state(cls, state: dict) -> "RngStream":
        rng = cls(state["seed"], state["stream_id"])
        rng._gen.bit_generator.state = state["bit_generator"]
        return rng

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def sample_exponential(rng: RngStream, rate: float) -> float:
    """Draw ``E ~ Exp(rate)``; a zero rate never fires and returns ``inf``.

    A zero rate consumes no randomness.
    """
    if not (rate >= 0.0 and math.isfinite(rate)):
        raise ValueError(f"rate must be finite and non-negative, got {rate!r}")
    if rate == 0.0:
        return math.inf
    return rng.standard_exponential() / rate


def sample_categorical_proportional(rng: RngStream, weights) -> int:
    """Return index ``d`` with probability ``weights[d] / sum(weights)``."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    cum = np.cumsum(w)
    total = cum[-1]
    if total <= 0.0:
        raise ValueError("at least one weight must be positive")
    # side="right" skips zero-weight entries sitting on a boundary
    idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
    if idx >= w.size:  # u * total rounded up to total
        idx = int(np.flatnonzero(w > 0)[-1])
    return idx


def sample_uniform_interval(rng: RngStream, lo: float, hi: float) -> float:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("interval bounds must be finite")
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if lo == hi:
        return float(lo)
    u = lo + (hi - lo) * rng.random()
    return float(min(max(u, lo), hi))


def expected_truncated_discount(eta: float, gamma: float, delta: float) -> float:
    """``E[exp(-gamma * t)]`` for ``t ~ Exp(eta)`` truncated to ``[0, delta]``.

    Closed form::

        eta / (eta + gamma) * (1 - exp(-(eta + gamma) delta)) / (1 - exp(-eta delta))

    which reduces to ``eta / (eta + gamma)`` when ``delta`` is infinite.
    """
    if not eta > 0.0:
        raise ValueError(f"eta must be positive, got {eta!r}")
    if gamma < 0.0:
        raise ValueError(f"gamma must be non-negative, got {gamma!r}")
    if not delta > 0.0:
        raise ValueError(f"delta must be positive or inf, got {delta!r}")
    ratio = eta / (eta + gamma)
    if math.isinf(delta):
        return ratio
    return ratio * math.expm1(-(eta + gamma) * delta) / math.expm1(-eta * delta)
