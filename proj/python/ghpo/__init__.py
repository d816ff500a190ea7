# SPDX-License-Identifier: Apache-2.0
"""Group-relative policy optimization with hint-guided sampling."""

from ._core import *  # noqa: F401,F403
from ._core import GUIDING_SENTENCE, TrainConfig, __doc__  # noqa: F401
