"""Deterministic random-number streams.

Every sampling routine in the package is a pure function of its inputs and an
:class:`RngStream`.  A stream is identified by ``(seed, stream_id)``; the same
pair always reproduces the same draw sequence, and distinct stream ids give
statistically independent sequences for the same seed.  Parallel work assigns
one stream id per unit of work, so results do not depend on scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RngStream", "as_generator"]


@dataclass(frozen=True)
class RngStream:
    """A named point in the seed space: ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Return a fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def shifted(self, offset: int) -> "RngStream":
        """Stream with the same seed and ``stream_id + offset``."""
        return RngStream(self.seed, self.stream_id + offset)


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    """Coerce an ``RngStream`` or an already-advancing generator to a generator.

    Composite routines call this once at entry; the returned generator then
    advances through all internal draws.
    """
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")
