"""Counter-derived random streams.

Every random draw in the pipeline comes from a generator derived from
(base_seed, index, purpose), so runs can be generated in any order or in
parallel and still reproduce bit-for-bit.
"""

import zlib

import numpy as np

from .exceptions import ValidationError


def purpose_code(purpose: str) -> int:
    """Stable integer tag for a purpose string (independent of PYTHONHASHSEED)."""
    return zlib.crc32(purpose.encode("utf-8"))


def derive_rng(base_seed: int, index: int, purpose: str) -> np.random.Generator:
    """Build the random stream for one (run, purpose) pair.

    Args:
        base_seed: Campaign seed
        index: Run or sample counter
        purpose: Stable tag naming what the stream is used for

    Returns:
        Independent numpy Generator

    Raises:
        ValidationError: If seed or index is negative
    """
    if base_seed < 0 or index < 0:
        raise ValidationError(
            "Seeds and indices must be non-negative",
            {"base_seed": base_seed, "index": index},
        )
    sequence = np.random.SeedSequence(
        entropy=base_seed, spawn_key=(index, purpose_code(purpose))
    )
    return np.random.default_rng(sequence)
