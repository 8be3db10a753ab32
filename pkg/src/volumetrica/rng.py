"""Deterministic random streams.

Every chain gets its own stream identified by (seed, stream_id); the
same pair always reproduces the same draw sequence.  One ball-walk
step consumes exactly n standard normals (direction) followed by one
uniform (radius), in that order, so that all walk variants can replay
each other's trajectories bit for bit.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A counted, replayable random stream backed by PCG64."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,)))
        )
        self.draws = 0

    def normals(self, n: int) -> np.ndarray:
        self.draws += n
        return self._gen.standard_normal(n)

    def uniform(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def generator(self) -> np.random.Generator:
        """Raw generator for bulk (multi-chain) use; bypasses the draw counter."""
        return self._gen

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, draws={self.draws})"


def stage_generator(seed: int, stage: str, chain: int = 0) -> np.random.Generator:
    """Generator for (stage, chain) under one master seed.

    The documented, stable hash: the stage name's bytes are folded into
    a SeedSequence spawn key together with the chain index.
    """
    key = tuple(stage.encode("utf-8")) + (chain,)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))
