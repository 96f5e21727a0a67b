"""Deterministic numerical primitives.

Gaussian sampling
-----------------
All randomness in the package flows through :func:`gaussian_block`. The
stream for ``RngSeed(seed, stream_id)`` is the Philox4x64-10 counter-based
generator keyed with ``(seed, stream_id)`` and started at counter zero
(numpy's ``Philox`` bit generator). Its raw 64-bit outputs ``r_0, r_1, ...``
are mapped to uniforms on the open interval (0, 1) by

    u_k = ((r_k >> 11) + 0.5) * 2**-53

and consecutive pairs are turned into normals by the Box-Muller transform

    z_{2p}   = sqrt(-2 ln u_{2p}) * cos(2 pi u_{2p+1})
    z_{2p+1} = sqrt(-2 ln u_{2p}) * sin(2 pi u_{2p+1})

Normal number ``k`` of a stream therefore depends only on ``(seed,
stream_id, k)``, so any slice of the stream can be produced without
generating what precedes it.
"""

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateInput, DomainError, InvalidArgument

_U64 = 1 << 64
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < _U64:
                raise InvalidArgument(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def derive(self, *labels: int) -> "RngSeed":
        """Child stream identified by integer labels (trial index, batch, ...).

        The child's stream id is the first 8 bytes (little-endian) of
        BLAKE2b-64 over the packed ``(seed, stream_id, *labels)``.
        """
        payload = struct.pack(f"<{2 + len(labels)}Q", self.seed, self.stream_id,
                              *(int(l) % _U64 for l in labels))
        digest = hashlib.blake2b(payload, digest_size=8).digest()
        return RngSeed(self.seed, int.from_bytes(digest, "little"))


def as_seed(seed) -> RngSeed:
    if isinstance(seed, RngSeed):
        return seed
    if isinstance(seed, tuple):
        return RngSeed(*seed)
    return RngSeed(int(seed), 0)


def _raw(seed: RngSeed, start: int, count: int) -> np.ndarray:
    bitgen = np.random.Philox(key=np.array([seed.seed, seed.stream_id], dtype=np.uint64))
    # each counter increment yields four 64-bit words
    block, skip = divmod(start, 4)
    if block:
        bitgen.advance(block)
    return bitgen.random_raw(skip + count)[skip:]


def uniform_block(seed: RngSeed, start: int, count: int) -> np.ndarray:
    """Uniforms u_start .. u_{start+count-1} on (0, 1)."""
    raw = _raw(as_seed(seed), start, count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def gaussian_block(seed: RngSeed, start: int, count: int) -> np.ndarray:
    """Normals number ``start`` to ``start + count - 1`` of a seeded stream."""
    if count < 0 or start < 0:
        raise InvalidArgument("start and count must be non-negative")
    if count == 0:
        return np.empty(0)
    first_pair = start // 2
    last_pair = (start + count - 1) // 2
    u = uniform_block(seed, 2 * first_pair, 2 * (last_pair - first_pair + 1))
    radius = np.sqrt(-2.0 * np.log(u[0::2]))
    angle = _TWO_PI * u[1::2]
    z = np.empty(u.size)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    lo = start - 2 * first_pair
    return z[lo:lo + count]


def gaussian_vector(seed: RngSeed, n: int) -> np.ndarray:
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    return gaussian_block(as_seed(seed), 0, n)


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Dense-indexed vector with an optional sparsity declaration."""

    values: np.ndarray
    declared_sparsity: Optional[int] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise InvalidArgument("values must be one-dimensional")
        object.__setattr__(self, "values", vals)
        if self.declared_sparsity is not None and self.nnz > self.declared_sparsity:
            raise InvalidArgument(
                f"{self.nnz} nonzeros exceed declared sparsity {self.declared_sparsity}")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"SparseVector(n={self.n}, nnz={self.nnz}, s={self.declared_sparsity})"


def sign(t: float) -> int:
    t = float(t)
    if not math.isfinite(t):
        raise InvalidArgument(f"sign of non-finite value {t}")
    return 1 if t >= 0 else -1


def sign_array(t) -> np.ndarray:
    """Elementwise sign with sign(0) = +1, as int8."""
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise InvalidArgument("sign of non-finite values")
    return np.where(t >= 0, 1, -1).astype(np.int8)


def top_indices(v: np.ndarray, s: int) -> np.ndarray:
    # stable sort keeps the lower index first among equal magnitudes
    return np.argsort(-np.abs(v), kind="stable")[:s]


def hard_threshold_array(v, s: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not 1 <= s <= v.size:
        raise InvalidArgument(f"need 1 <= s <= n, got s={s}, n={v.size}")
    out = np.zeros_like(v)
    keep = top_indices(v, s)
    out[keep] = v[keep]
    return out


def hard_threshold(v, s: int) -> SparseVector:
    """Keep the ``s`` largest-magnitude entries of ``v`` and zero the rest."""
    return SparseVector(hard_threshold_array(np.asarray(v), s), s)


def hard_threshold_normalized(v, s: int) -> SparseVector:
    kept = hard_threshold_array(np.asarray(v), s)
    nrm = np.linalg.norm(kept)
    if nrm == 0.0:
        raise DegenerateInput("hard-thresholded vector is zero; cannot normalize")
    return SparseVector(kept / nrm, s)


def orthogonal_same_support(u) -> SparseVector:
    """Unit vector orthogonal to ``u`` living on the support of ``u``.

    Uses the two largest-magnitude support entries ``i < j``:
    ``v_i = u_j, v_j = -u_i``. A one-element support cannot host an
    orthogonal direction, so the smallest index outside it is used instead.
    """
    u = np.asarray(u, dtype=np.float64)
    supp = np.flatnonzero(u)
    if supp.size == 0:
        raise DegenerateInput("zero vector has no orthogonal same-support direction")
    v = np.zeros_like(u)
    if supp.size == 1:
        outside = np.setdiff1d(np.arange(u.size), supp)
        if outside.size == 0:
            raise DegenerateInput("no orthogonal direction exists in dimension 1")
        v[outside[0]] = 1.0
        return SparseVector(v)
    i, j = np.sort(top_indices(u, 2))
    v[i] = u[j]
    v[j] = -u[i]
    v /= np.linalg.norm(v)
    return SparseVector(v)


def magnitude_map(xi: float) -> float:
    """1 - sqrt(1 - xi^2) / xi on (0, 1]."""
    xi = float(xi)
    if not 0.0 < xi <= 1.0:
        raise DomainError(f"xi must lie in (0, 1], got {xi}")
    return 1.0 - math.sqrt(1.0 - xi * xi) / xi


def hamming_distance(y1, y2) -> int:
    y1 = np.asarray(y1)
    y2 = np.asarray(y2)
    if y1.shape != y2.shape:
        raise InvalidArgument(f"length mismatch: {y1.shape} vs {y2.shape}")
    return int(np.count_nonzero(y1 != y2))


def random_sparse(seed, n: int, s: int) -> np.ndarray:
    """s-sparse vector: uniformly random support, N(0,1) entries on it."""
    if not 1 <= s <= n:
        raise InvalidArgument(f"need 1 <= s <= n, got s={s}, n={n}")
    seed = as_seed(seed)
    supp = np.argsort(uniform_block(seed.derive(0), 0, n), kind="stable")[:s]
    x = np.zeros(n)
    x[np.sort(supp)] = gaussian_block(seed.derive(1), 0, s)
    return x


def random_sparse_unit(seed, n: int, s: int) -> np.ndarray:
    x = random_sparse(seed, n, s)
    return x / np.linalg.norm(x)
