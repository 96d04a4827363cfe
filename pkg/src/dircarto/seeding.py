"""Named, order-independent random substreams derived from one root seed."""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for the stream ``seed / names[0] / names[1] / ...``.

    Names may be strings or non-negative ints; the same path always yields
    the same stream regardless of what else was drawn before.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(ss))
