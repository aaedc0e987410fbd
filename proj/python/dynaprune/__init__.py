"""Dataset pruning from training dynamics."""

from ._dynaprune import *  # noqa: F401,F403
from ._dynaprune import __doc__  # noqa: F401

__version__ = "0.1.0"
