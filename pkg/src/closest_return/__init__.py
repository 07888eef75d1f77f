"""Closest returns of interval maps: Gumbel laws, towers and mixing diagnostics."""
__version__ = "0.1.0"

from .maps import MapSpec, ExactDyadicState, make_map, zoo  # noqa: E402
from .orbit import ReturnMode, closest_return_series, normalized_maximum  # noqa: E402
from .seeding import derive_seed  # noqa: E402

__all__ = ["MapSpec", "ExactDyadicState", "make_map", "zoo", "ReturnMode", "closest_return_series",
           "normalized_maximum", "derive_seed"]
