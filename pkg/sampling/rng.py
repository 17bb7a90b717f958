"""Counter-based random streams keyed by (seed, stream id, derivation path)."""

from dataclasses import dataclass, field

import numpy as np

# Mask seeds into the 64-bit range accepted by SeedSequence
_MASK64 = (1 << 64) - 1

# Path tags for derived streams, far above any iteration or chunk index
STICK_BRANCH = 1 << 40
REPLICATE_BRANCH = (1 << 40) + 1
PREDICT_BRANCH = (1 << 40) + 2


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream backed by the Philox counter-based generator.

    Identical ``(seed, stream_id, path)`` triples reproduce identical variate
    sequences. Child streams (``child``) extend the path, so derivations such as
    root -> replicate -> chain -> observation chunk are independent of the order
    in which they are created or consumed.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()
    _generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seq = np.random.SeedSequence(
            entropy=int(self.seed) & _MASK64,
            spawn_key=(int(self.stream_id) & _MASK64, *(int(p) & _MASK64 for p in self.path)),
        )
        object.__setattr__(self, "_generator", np.random.Generator(np.random.Philox(seq)))

    @property
    def generator(self) -> np.random.Generator:
        """The numpy Generator consuming this stream."""
        return self._generator

    def child(self, *index: int) -> "RngStream":
        """Derive an independent fresh stream one or more levels below this one."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(i) for i in index))

    def reset(self) -> "RngStream":
        """Return a fresh copy positioned at the start of this stream."""
        return RngStream(self.seed, self.stream_id, self.path)


def as_generator(rng: "RngStream | np.random.Generator") -> np.random.Generator:
    """Accept either an RngStream or a bare numpy Generator."""
    return rng.generator if isinstance(rng, RngStream) else rng

