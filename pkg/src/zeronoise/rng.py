"""Counter-based random streams.

All randomness in the package comes from Philox4x64-10 (Salmon et al.,
"Parallel random numbers: as easy as 1, 2, 3", SC'11) as shipped with
NumPy.  A stream is identified by a 128-bit key ``(seed, stream)``; the
64-bit words of a stream are addressed by position, so the draws used at
step ``k`` of an orbit, or for column ``j`` of a transfer matrix, are a
pure function of ``(seed, stream, k)`` and never depend on how much of the
stream was consumed before.  Philox outputs four words per counter value,
so every step is allotted a whole number of counter blocks.

Uniform doubles are formed from the top 53 bits of each word,
``(w >> 11) * 2**-53``, which is exact and platform independent.
"""

import numpy as np

_WORDS_PER_BLOCK = 4
_TO_UNIT = 2.0 ** -53

# Stream tags keep different consumers of one seed apart.
ORBIT = 0
ULAM = 1
SAMPLER = 2
FRAME = 3


def stream_id(tag, index=0, attempt=0):
    """Pack a consumer tag, a lane/cell index and a retry counter into 64 bits."""
    if not (0 <= tag < 256 and 0 <= attempt < 1024 and 0 <= index < 2 ** 46):
        raise ValueError("stream id component out of range")
    return (tag << 56) | (attempt << 46) | index


class CounterStream:
    """Random-access view of one Philox stream.

    >>> s = CounterStream(seed=1, stream=0)
    >>> a = s.uniforms(0, 10, 3)
    >>> b = s.uniforms(4, 6, 3)
    >>> bool(np.all(a[4:] == b))
    True
    """

    def __init__(self, seed, stream=0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        self._key = np.array([self.seed, self.stream], dtype=np.uint64)

    def raw(self, start_step, n_steps, words_per_step):
        """Words for steps ``start_step .. start_step + n_steps - 1``, shape (n, w)."""
        blocks = -(-words_per_step // _WORDS_PER_BLOCK)
        bitgen = np.random.Philox(key=self._key, counter=int(start_step) * blocks)
        out = bitgen.random_raw(n_steps * blocks * _WORDS_PER_BLOCK)
        out = out.reshape(n_steps, blocks * _WORDS_PER_BLOCK)
        return out[:, :words_per_step]

    def uniforms(self, start_step, n_steps, words_per_step):
        """Doubles in [0, 1) for a range of steps, shape (n_steps, words_per_step)."""
        return (self.raw(start_step, n_steps, words_per_step) >> np.uint64(11)) * _TO_UNIT

    def state(self, step):
        """Everything needed to resume the stream at ``step``."""
        return {"algorithm": "philox4x64-10", "seed": self.seed,
                "stream": self.stream, "step": int(step)}
