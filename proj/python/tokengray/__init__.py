"""Condition-number laboratory: SVD/DCT token graying and bound verification.

Thin wrapper over the compiled extension. The extension lives inside this
package for installed builds and at the top level for in-tree test runs.
"""

try:
    from ._tokengray import *  # noqa: F401,F403
    from ._tokengray import __doc__  # noqa: F401
except ImportError:  # in-tree: extension is on sys.path, not in the package
    from _tokengray import *  # noqa: F401,F403
    from _tokengray import __doc__  # noqa: F401

__version__ = "0.1.0"
