import numpy as np


def stream_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (master seed, key path) pair, e.g. (seed, check, tag)"""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key)))


def derive_seed(master_seed: int, *key: int) -> int:
    """A 63-bit integer seed for a sub-experiment, stable across platforms"""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0]) >> 1


def replicate_seed(master_seed: int, index: int) -> int:
    return derive_seed(master_seed, index)


def replicate_rng(master_seed: int, index: int) -> np.random.Generator:
    """default_rng(replicate_seed(master_seed, index)); the seed alone reproduces the replicate"""
    return np.random.default_rng(replicate_seed(master_seed, index))
