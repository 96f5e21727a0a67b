"""Order-one recovery with Gaussian dithers and l1 minimization over the
cone of sign constraints."""

from dataclasses import dataclass, field, replace

import numpy as np

from .core import as_seed, gaussian_vector
from .errors import InvalidArgument
from .measure import as_ensemble
from .solver import SolverConfig, solve_l1_cone

PRESETS = {"practical": (1.0, 1.0), "theoretical": (2.0, 2.0)}


@dataclass(frozen=True)
class SocpSchemeConfig:
    """Dither std is ``variance_factor * R``; ball radius is ``ball_factor * R``.

    ``(2, 2)`` carries the noise guarantees; ``(1, 1)`` is the tighter choice
    that works better in practice and is the default.
    """

    q: int
    R: float = 1.0
    variance_factor: float = 1.0
    ball_factor: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.q < 1:
            raise InvalidArgument(f"q must be >= 1, got {self.q}")
        if not self.R > 0:
            raise InvalidArgument(f"R must be positive, got {self.R}")
        if self.variance_factor <= 0 or self.ball_factor <= 0:
            raise InvalidArgument("variance and ball factors must be positive")

    @classmethod
    def preset(cls, name: str, q: int, R: float = 1.0, **kw) -> "SocpSchemeConfig":
        try:
            vf, bf = PRESETS[name]
        except KeyError:
            raise InvalidArgument(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(q, R, vf, bf, **kw)

    def with_radius(self, R: float) -> "SocpSchemeConfig":
        return replace(self, R=R)


def socp_thresholds(cfg: SocpSchemeConfig, seed) -> np.ndarray:
    """Non-adaptive dithers ``tau ~ N(0, (variance_factor * R)^2 I_q)``."""
    return cfg.variance_factor * cfg.R * gaussian_vector(as_seed(seed), cfg.q)


def socp_recover(y, A, tau, cfg: SocpSchemeConfig, return_info=False):
    y = np.asarray(y)
    if y.size == 0:
        raise InvalidArgument("empty batch")
    A = as_ensemble(A).matrix
    if A.shape[0] != y.size:
        raise InvalidArgument(f"{y.size} signs for {A.shape[0]} rows")
    return solve_l1_cone(A, y, tau, cfg.ball_factor * cfg.R, cfg.solver, return_info=return_info)
