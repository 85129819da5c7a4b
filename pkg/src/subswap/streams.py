"""Deterministic random-number streams for parallel Monte-Carlo trials.

Every trial gets its own counter-based (Philox) stream whose 128-bit key
is derived from the master seed, a label path, and the trial index.  The
derivation is pure arithmetic, so results are bit-identical no matter how
trials are ordered, chunked, or distributed.  Low-volume consumers (one
stream per run rather than per trial) use SeedSequence spawning directly.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _path_words(path):
    words = []
    for item in path:
        if isinstance(item, str):
            digest = hashlib.sha256(item.encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:4], "little"))
        else:
            words.append(int(item) & 0xFFFFFFFF)
    return tuple(words)


def substream(master_seed, *path):
    """A PCG64 generator for the given label path under the master seed."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_path_words(path))
    return np.random.default_rng(seq)


def _splitmix64(x):
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _MIX1
    x ^= x >> np.uint64(27)
    x *= _MIX2
    x ^= x >> np.uint64(31)
    return x


def trial_keys(master_seed, path, start, count):
    """128-bit Philox keys for trials start..start+count-1 as a (count, 2) array."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_path_words(path))
    run = seq.generate_state(2, dtype=np.uint64)
    idx = np.arange(start, start + count, dtype=np.uint64)
    lo = _splitmix64(run[0] + idx * _GOLDEN)
    hi = _splitmix64(run[1] ^ lo)
    return np.stack([lo, hi], axis=1)


def trial_generator(master_seed, path, trial):
    """The generator for one trial; matches the bulk fill bit for bit."""
    key = trial_keys(master_seed, path, trial, 1)[0]
    return np.random.Generator(np.random.Philox(key=key))


class TrialNormalSource:
    """Fills per-trial standard-normal blocks from per-trial Philox streams.

    Reuses one bit-generator object and resets its state per trial, which
    is an order of magnitude faster than constructing generators in a loop
    while producing exactly the same draws as :func:`trial_generator`.
    """

    def __init__(self, master_seed, path):
        self.master_seed = int(master_seed)
        self.path = tuple(path)
        self._bitgen = np.random.Philox(key=0)
        self._rng = np.random.Generator(self._bitgen)
        self._counter = np.zeros(4, dtype=np.uint64)
        self._buffer = np.zeros(4, dtype=np.uint64)

    def fill(self, out, start):
        """Fill out[i] from the stream of trial start + i, for every i."""
        keys = trial_keys(self.master_seed, self.path, start, out.shape[0])
        bitgen = self._bitgen
        rng = self._rng
        counter = self._counter
        buffer = self._buffer
        for i in range(out.shape[0]):
            bitgen.state = {
                "bit_generator": "Philox",
                "state": {"counter": counter, "key": keys[i]},
                "buffer": buffer,
                "buffer_pos": 4,
                "has_uint32": 0,
                "uinteger": 0,
            }
            rng.standard_normal(out=out[i])
        return out
