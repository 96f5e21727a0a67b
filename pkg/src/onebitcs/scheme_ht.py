"""Order-one recovery by hard thresholding.

The batch is split in two halves. The first half is quantized against zero
thresholds and yields a direction estimate ``u``. The second half measures
``x - w`` with ``w = 2R(u + v)``, ``v`` a unit vector orthogonal to ``u`` on
the same support; the direction ``t`` of ``w - x`` then pins down the angle
at ``w`` in the plane of ``u`` and ``v``, and with it the length of the
projection of ``x`` onto ``u``:  ``|x#| = 2R f(<t, v>)``.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import (SparseVector, hard_threshold_normalized, magnitude_map,
                   orthogonal_same_support, sign_array)
from .errors import DegenerateInput, InvalidArgument
from .measure import as_ensemble

log = logging.getLogger(__name__)

# interval on which |f'| stays bounded; <t, v> lands in it w.h.p.
CLAMP_LO = 1.0 / math.sqrt(2.0) - 1.0 / 20.0
CLAMP_HI = 2.0 / math.sqrt(5.0) + 1.0 / 20.0


@dataclass(frozen=True)
class HtSchemeConfig:
    q: int
    s: int
    R: float = 1.0
    # sparsity used for the second-half direction estimate (None: same as s)
    t_sparsity: Optional[int] = None

    def __post_init__(self):
        if self.q < 2 or self.q % 2:
            raise InvalidArgument(f"q must be even and >= 2, got {self.q}")
        if self.s < 1:
            raise InvalidArgument(f"s must be >= 1, got {self.s}")
        if not self.R > 0:
            raise InvalidArgument(f"R must be positive, got {self.R}")

    @property
    def half(self) -> int:
        return self.q // 2

    def with_radius(self, R: float) -> "HtSchemeConfig":
        return HtSchemeConfig(self.q, self.s, R, self.t_sparsity)


def _note(events, what):
    log.debug("ht scheme: %s", what)
    if events is not None:
        events.append(what)


def direction_estimate(A_half, y_half, s: int, events: Optional[List[str]] = None) -> SparseVector:
    """H'_s(A^T y); the first basis vector if the back-projection vanishes."""
    A_half = as_ensemble(A_half).matrix
    y_half = np.asarray(y_half, dtype=np.float64)
    if A_half.shape[0] != y_half.size:
        raise InvalidArgument(f"{y_half.size} signs for {A_half.shape[0]} rows")
    try:
        return hard_threshold_normalized(A_half.T @ y_half, min(s, A_half.shape[1]))
    except DegenerateInput:
        _note(events, "degenerate-direction")
        e0 = np.zeros(A_half.shape[1])
        e0[0] = 1.0
        return SparseVector(e0, s)


def _split(ens, q):
    A = as_ensemble(ens).matrix
    if A.shape[0] != q:
        raise InvalidArgument(f"ensemble has {A.shape[0]} rows, scheme expects q={q}")
    return A[: q // 2], A[q // 2:]


def ht_thresholds(ax, ens, cfg: HtSchemeConfig, events: Optional[List[str]] = None) -> np.ndarray:
    """Zeros on the first half, ``A_2 w`` with ``w = 2R(u + v)`` on the second."""
    ax = np.asarray(ax, dtype=np.float64)
    if ax.size != cfg.q:
        raise InvalidArgument(f"expected {cfg.q} measurements, got {ax.size}")
    A1, A2 = _split(ens, cfg.q)
    u = direction_estimate(A1, sign_array(ax[: cfg.half]), cfg.s, events)
    v = orthogonal_same_support(u.values)
    w = 2.0 * cfg.R * (u.values + v.values)
    return np.concatenate([np.zeros(cfg.half), A2 @ w])


def ht_recover(y, ens, cfg: HtSchemeConfig, events: Optional[List[str]] = None) -> SparseVector:
    y = np.asarray(y, dtype=np.float64)
    if y.size != cfg.q:
        raise InvalidArgument(f"expected {cfg.q} signs, got {y.size}")
    A1, A2 = _split(ens, cfg.q)
    u = direction_estimate(A1, y[: cfg.half], cfg.s, events)
    v = orthogonal_same_support(u.values)
    t = -direction_estimate(A2, y[cfg.half:], cfg.t_sparsity or cfg.s, events).values
    xi = float(t @ v.values)
    if not CLAMP_LO <= xi <= CLAMP_HI:
        _note(events, "clamped")
        xi = min(max(xi, CLAMP_LO), CLAMP_HI)
    # the projected length being estimated is non-negative
    magnitude = 2.0 * cfg.R * max(magnitude_map(xi), 0.0)
    return SparseVector(magnitude * u.values, cfg.s)
