"""Rotationally symmetric Ricci flow on warped products ds^2 + f(s)^2 g_std."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .curvature import curvature_at, pic1_check, profile_curvature
from .flow import StepControl, evolve, init_state
from .geometry import ratio_scan, volume_ratio_lower_bound
from .profiles import Profile, library, make_profile, profile_from_spec

__all__ = [
    "Profile",
    "StepControl",
    "curvature_at",
    "evolve",
    "init_state",
    "library",
    "make_profile",
    "pic1_check",
    "profile_curvature",
    "profile_from_spec",
    "ratio_scan",
    "volume_ratio_lower_bound",
]
