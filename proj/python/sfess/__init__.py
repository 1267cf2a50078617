"""k-subset distributions and score-function gradient estimators."""

from ._sfess import *  # noqa: F401,F403
from ._sfess import __doc__  # noqa: F401
