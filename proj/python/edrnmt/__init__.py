"""Attention encoder-decoder translator with a source reconstructor.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its surface. When running from a build tree where the extension
has not been placed inside the package, fall back to a top-level ``_core``
module on ``sys.path``.
"""

try:
    from edrnmt._core import *  # noqa: F401,F403
    from edrnmt._core import __doc__ as _core_doc
except ImportError:  # build-tree layout: _core.so next to the build products
    from _core import *  # noqa: F401,F403
    from _core import __doc__ as _core_doc

__doc__ = _core_doc or __doc__
