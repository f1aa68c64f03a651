"""Thermal side-channel analysis toolkit (python surface of the C++ core)."""

try:
    from ._thermaltap import *  # noqa: F401,F403
    from ._thermaltap import __version__  # noqa: F401
except ImportError:  # running against a build tree, module not packaged yet
    from _thermaltap import *  # noqa: F401,F403
    from _thermaltap import __version__  # noqa: F401
