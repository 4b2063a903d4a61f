"""Python interface to the corefbench core."""

try:
    from ._corefbench import *  # noqa: F401,F403
    from ._corefbench import __version__
except ImportError:  # development layout: module built next to the package
    from _corefbench import *  # noqa: F401,F403
    from _corefbench import __version__

__all__ = [name for name in dir() if not name.startswith("_")]
