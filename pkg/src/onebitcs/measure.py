"""Gaussian measurement ensembles and the thresholded-sign quantizer."""

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import RngSeed, as_seed, gaussian_block, sign_array, uniform_block
from .errors import FormatError, InvalidArgument


def gaussian_rows(seed: RngSeed, n: int, start: int, stop: int) -> np.ndarray:
    """Rows ``start:stop`` of the ensemble keyed by ``seed``.

    Row ``i`` holds normals ``i*n .. i*n + n - 1`` of the stream, so any
    row block can be produced on its own and matches the full matrix.
    """
    if not 0 <= start <= stop:
        raise InvalidArgument(f"bad row range [{start}, {stop})")
    return gaussian_block(seed, start * n, (stop - start) * n).reshape(stop - start, n)


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    matrix: np.ndarray
    seed: Optional[RngSeed] = None
    row_offset: int = 0

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def rows(self, start: int, stop: int) -> "MeasurementEnsemble":
        if not 0 <= start <= stop <= self.m:
            raise InvalidArgument(f"row range [{start}, {stop}) outside 0..{self.m}")
        return MeasurementEnsemble(self.matrix[start:stop], self.seed, self.row_offset + start)

    def batch(self, t: int, q: int) -> "MeasurementEnsemble":
        """Zero-based batch ``t`` of size ``q``: rows ``[t*q, (t+1)*q)``."""
        return self.rows(t * q, (t + 1) * q)

    def __matmul__(self, x):
        return self.matrix @ np.asarray(x, dtype=np.float64)


def make_ensemble(seed, m: int, n: int) -> MeasurementEnsemble:
    if m < 1 or n < 1:
        raise InvalidArgument(f"dimensions must be positive, got m={m}, n={n}")
    seed = as_seed(seed)
    return MeasurementEnsemble(gaussian_rows(seed, n, 0, m), seed)


def as_ensemble(a) -> MeasurementEnsemble:
    if isinstance(a, MeasurementEnsemble):
        return a
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    return MeasurementEnsemble(a)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Pre-quantization error ``e`` and post-quantization flips ``f``."""

    e: np.ndarray
    f: np.ndarray
    flip_budget: Optional[int] = None
    amplitude_bound: Optional[float] = None

    def __post_init__(self):
        e = np.asarray(self.e, dtype=np.float64)
        f = np.asarray(self.f, dtype=np.int8)
        if e.shape != f.shape or e.ndim != 1:
            raise InvalidArgument("e and f must be 1-d arrays of equal length")
        if not np.all((f == 1) | (f == -1)):
            raise InvalidArgument("flip mask entries must be +1 or -1")
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "f", f)
        if self.flip_budget is not None and self.n_flips > self.flip_budget:
            raise InvalidArgument(f"{self.n_flips} flips exceed budget {self.flip_budget}")

    @property
    def m(self) -> int:
        return self.e.size

    @property
    def n_flips(self) -> int:
        return int(np.count_nonzero(self.f == -1))

    @classmethod
    def clean(cls, m: int) -> "NoiseSpec":
        return cls(np.zeros(m), np.ones(m, dtype=np.int8), 0, 0.0)

    @classmethod
    def bounded(cls, e, f, eta: float, signal_norm: float, flip_budget: int) -> "NoiseSpec":
        e = np.asarray(e, dtype=np.float64)
        if e.size and np.max(np.abs(e)) > eta * signal_norm:
            raise InvalidArgument(
                f"||e||_inf = {np.max(np.abs(e)):.3g} exceeds eta*||x|| = {eta * signal_norm:.3g}")
        return cls(e, f, flip_budget, eta)

    @classmethod
    def random(cls, seed, m: int, sigma: float = 0.0, flip_frac: float = 0.0) -> "NoiseSpec":
        """Gaussian ``e ~ N(0, sigma^2 I)`` plus ``round(flip_frac*m)`` flips
        placed uniformly without replacement."""
        if sigma < 0 or not 0 <= flip_frac <= 1:
            raise InvalidArgument("need sigma >= 0 and flip_frac in [0, 1]")
        seed = as_seed(seed)
        e = sigma * gaussian_block(seed.derive(0), 0, m) if sigma > 0 else np.zeros(m)
        b = int(round(flip_frac * m))
        f = np.ones(m, dtype=np.int8)
        if b:
            order = np.argsort(uniform_block(seed.derive(1), 0, m), kind="stable")
            f[order[:b]] = -1
        return cls(e, f, b)

    def rows(self, start: int, stop: int) -> "NoiseSpec":
        return NoiseSpec(self.e[start:stop], self.f[start:stop])


def quantize(ax, tau, noise: Optional[NoiseSpec] = None) -> np.ndarray:
    """y_i = f_i * sign(ax_i - tau_i + e_i), sign(0) = +1."""
    ax = np.asarray(ax, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if ax.shape != tau.shape:
        raise InvalidArgument(f"length mismatch: ax {ax.shape} vs tau {tau.shape}")
    if noise is None:
        return sign_array(ax - tau)
    if noise.m != ax.size:
        raise InvalidArgument(f"noise length {noise.m} != {ax.size}")
    return (noise.f * sign_array(ax - tau + noise.e)).astype(np.int8)


def measure_affine(ens, x, shift) -> np.ndarray:
    """A x - shift."""
    ens = as_ensemble(ens)
    x = np.asarray(x, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if x.shape != (ens.n,):
        raise InvalidArgument(f"x has shape {x.shape}, ensemble has n={ens.n}")
    if shift.shape != (ens.m,):
        raise InvalidArgument(f"shift has shape {shift.shape}, ensemble has m={ens.m}")
    return ens.matrix @ x - shift


_HEADER = struct.Struct("<QQ")


@dataclass(frozen=True, eq=False)
class QuantizedRecord:
    """Everything the decoder receives: signs, thresholds and batch layout.

    Entries past ``T*q`` are never quantized; they hold ``y = +1, tau = 0``.
    """

    y: np.ndarray
    tau: np.ndarray
    q: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int8)
        tau = np.asarray(self.tau, dtype=np.float64)
        if y.shape != tau.shape or y.ndim != 1:
            raise InvalidArgument("y and tau must be 1-d of equal length")
        if self.q < 1:
            raise InvalidArgument(f"batch size must be >= 1, got {self.q}")
        if not np.all((y == 1) | (y == -1)):
            raise InvalidArgument("y must contain only +1/-1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "tau", tau)

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def T(self) -> int:
        return self.m // self.q

    @property
    def unused(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        mask[self.T * self.q:] = True
        return mask

    def batch(self, t: int):
        sl = slice(t * self.q, (t + 1) * self.q)
        return self.y[sl], self.tau[sl]

    def to_bytes(self) -> bytes:
        """Little-endian ``[m:u64][q:u64][y: m x {0x01, 0xFF}][tau: m x f64]``."""
        return (_HEADER.pack(self.m, self.q) + self.y.astype("<i1").tobytes()
                + self.tau.astype("<f8").tobytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuantizedRecord":
        if len(data) < _HEADER.size:
            raise FormatError("record shorter than header")
        m, q = _HEADER.unpack_from(data)
        expected = _HEADER.size + 9 * m
        if len(data) != expected:
            raise FormatError(f"record of m={m} needs {expected} bytes, got {len(data)}")
        y = np.frombuffer(data, dtype="<i1", count=m, offset=_HEADER.size)
        tau = np.frombuffer(data, dtype="<f8", count=m, offset=_HEADER.size + m)
        if not np.all((y == 1) | (y == -1)):
            raise FormatError("sign bytes must be 0x01 or 0xFF")
        try:
            return cls(y.astype(np.int8), tau.astype(np.float64), int(q))
        except InvalidArgument as exc:
            raise FormatError(str(exc)) from exc
