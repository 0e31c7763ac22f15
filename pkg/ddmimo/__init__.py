"""Double-directional channel estimation for dual-polarized massive MIMO.

The package is organised bottom-up:

1. **Geometry** (:mod:`.manifolds`): steering vectors and the mapping
   between path angles and per-element phase increments.
2. **Scenarios** (:mod:`.channel`): random multipath draws, the block
   channel they produce, pilots, noisy transmission and the LS baseline.
3. **Estimators**: :func:`~.cpd.parafac_pipeline` for pilots with full
   row rank and :func:`~.ctd.ctd_pipeline` for the compressed (frugal)
   pilot.
4. **Limits** (:mod:`.bounds`): how many paths each method is
   guaranteed to resolve.
5. **Evaluation** (:mod:`.bench`): NMSE, path matching and the
   Monte-Carlo sweep harness behind the ``ddmimo`` command.
"""

from __future__ import annotations

from .bench import match_paths, nmse, run_sweep
from .bounds import kmax_ctd, kmax_imdf, kmax_kruskal
from .channel import (
    ls_channel_estimate,
    make_frugal_pilot,
    make_orthogonal_pilot,
    sample_paths,
    synthesize_channel,
    transmit,
)
from .cpd import parafac_pipeline
from .ctd import ctd_pipeline
from .exceptions import DdMimoError
from .types import ArrayGeometry, ChannelMatrix, ParamEstimate, PathParams

__all__ = [
    "ArrayGeometry",
    "ChannelMatrix",
    "DdMimoError",
    "ParamEstimate",
    "PathParams",
    "ctd_pipeline",
    "kmax_ctd",
    "kmax_imdf",
    "kmax_kruskal",
    "ls_channel_estimate",
    "make_frugal_pilot",
    "make_orthogonal_pilot",
    "match_paths",
    "nmse",
    "parafac_pipeline",
    "run_sweep",
    "sample_paths",
    "synthesize_channel",
    "transmit",
]
