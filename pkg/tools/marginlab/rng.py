"""
MarginLab - Named random streams

Each concern draws from its own stream so that, e.g., changing augmentation
knobs never perturbs batch order.
"""
import numpy as np

STREAM_TAGS = {
    "data": 11,
    "split": 23,
    "label_noise": 29,
    "batches": 37,
    "augment": 41,
    "init": 53,
}


def make_rng(seed: int, stream: str, *extra: int) -> np.random.Generator:
    """Generator for ``stream`` under ``seed``; ``extra`` ints (e.g. epoch) refine it"""
    if stream not in STREAM_TAGS:
        raise KeyError(f"unknown rng stream '{stream}'")
    entropy = [int(seed) & 0xFFFFFFFF, STREAM_TAGS[stream], *[int(e) for e in extra]]
    return np.random.default_rng(np.random.SeedSequence(entropy))
