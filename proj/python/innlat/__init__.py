"""Invertible flows over sentence embeddings.

Batches follow the C++ layout: one sample per column.
"""

from ._innlat import *  # noqa: F401,F403
from ._innlat import Error, FlowModel, FlowConfig, run_experiment  # noqa: F401
