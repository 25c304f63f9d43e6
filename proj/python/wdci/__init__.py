"""Wavelet-decoupled stereo low-light enhancement."""

try:
    from ._wdci import *  # noqa: F401,F403
    from ._wdci import __doc__  # noqa: F401
except ImportError:  # in-tree build: the extension sits next to the package
    from _wdci import *  # noqa: F401,F403
