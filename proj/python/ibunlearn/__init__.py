from ._core import Rng, data, evalkit, masking, protocol, unlearn, vib

__all__ = ["Rng", "data", "evalkit", "masking", "protocol", "unlearn", "vib"]
