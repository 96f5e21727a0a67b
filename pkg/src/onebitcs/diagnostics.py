"""Monte Carlo checks of the random-matrix properties behind the guarantees.

Every check samples sparse vectors and counts how often a bound fails. None
of them certifies a supremum over the sparse set; a zero violation rate only
says no sampled vector broke the bound.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import as_seed, random_sparse_unit, sign_array, uniform_block
from .errors import InvalidArgument
from .measure import as_ensemble
from .solver import SolverConfig, basis_pursuit

METHOD_NOTE = "monte-carlo estimate, not a certified bound"

REPORT_HEADER = ("property", "q", "n", "s", "delta", "trials", "violations",
                 "violation_rate", "worst_ratio", "method")


def format_real(x) -> str:
    """17 significant digits, '.' separator; round-trips a float64 exactly."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class PropertyReport:
    name: str
    q: int
    n: int
    s: int
    delta: float
    trials: int
    violations: int
    worst_ratio: float
    extra: dict = field(default_factory=dict)

    @property
    def violation_rate(self) -> float:
        return self.violations / self.trials if self.trials else 0.0

    def csv_row(self) -> list:
        return [self.name, str(self.q), str(self.n), str(self.s), format_real(self.delta),
                str(self.trials), str(self.violations), format_real(self.violation_rate),
                format_real(self.worst_ratio), METHOD_NOTE]


def _validate(trials, delta):
    if trials < 1:
        raise InvalidArgument(f"trials must be >= 1, got {trials}")
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")


def _directions(seed, n, s, trials, label):
    seed = as_seed(seed)
    return np.stack([random_sparse_unit(seed.derive(label, k), n, s) for k in range(trials)], axis=1)


def check_rip(ens, s: int, delta: float, trials: int, seed) -> PropertyReport:
    """Fraction of sampled unit s-sparse x with |(1/q)||Ax||^2 - 1| > delta.

    ``worst_ratio`` is the sampled ratio ||Ax||^2 / (q ||x||^2) farthest from 1.
    """
    _validate(trials, delta)
    A = as_ensemble(ens).matrix
    q, n = A.shape
    X = _directions(seed, n, s, trials, 0)
    ratio = np.sum((A @ X) ** 2, axis=0) / q
    dev = np.abs(ratio - 1.0)
    return PropertyReport("rip", q, n, s, delta, trials, int(np.count_nonzero(dev > delta)),
                          float(ratio[np.argmax(dev)]))


def check_spep(ens, s: int, delta: float, trials: int, seed, same: bool = False) -> PropertyReport:
    """Fraction of sampled pairs with |sqrt(pi/2)/q <Aw, sign(Ax)> - <w, x>| > delta.

    ``same=True`` draws w = x. ``worst_ratio`` is the largest sampled deviation.
    """
    _validate(trials, delta)
    A = as_ensemble(ens).matrix
    q, n = A.shape
    X = _directions(seed, n, s, trials, 0)
    W = X if same else _directions(seed, n, s, trials, 1)
    stat = math.sqrt(math.pi / 2) / q * np.sum((A @ W) * sign_array(A @ X), axis=0)
    dev = np.abs(stat - np.sum(W * X, axis=0))
    return PropertyReport("spep", q, n, s, delta, trials, int(np.count_nonzero(dev > delta)),
                          float(dev.max()), {"same": same})


def check_tessellation(ens, tau, s: int, delta: float, pair_trials: int, seed,
                       same: bool = False, max_step: Optional[float] = None) -> PropertyReport:
    """Cells of the hyperplanes <a_i, z> = tau_i cut from the s-sparse unit ball.

    Random independent pairs essentially never share a cell when q is large,
    so the second point is a perturbation of the first: x' = x + r g with g a
    unit s-sparse direction and r log-uniform on [1e-6, max_step] (default
    2 delta), pulled back into the unit ball. Only pairs sharing a sign
    pattern count as trials; a trial is a violation when ||x - x'|| > delta/4.
    s-sparse points of the unit ball lie in sqrt(s) B_1 intersected with B_2.
    """
    if pair_trials < 1:
        raise InvalidArgument(f"pair_trials must be >= 1, got {pair_trials}")
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    A = as_ensemble(ens).matrix
    q, n = A.shape
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != (q,):
        raise InvalidArgument(f"tau must have length {q}")
    seed = as_seed(seed)
    hi = 2.0 * delta if max_step is None else max_step
    radii = uniform_block(seed.derive(2), 0, pair_trials)
    X = _directions(seed, n, s, pair_trials, 0) * radii
    if same:
        Xp = X.copy()
    else:
        G = _directions(seed, n, s, pair_trials, 1)
        steps = np.exp(np.log(1e-6) + (np.log(hi) - np.log(1e-6)) * uniform_block(seed.derive(3), 0, pair_trials))
        Xp = X + G * steps
        Xp /= np.maximum(1.0, np.linalg.norm(Xp, axis=0))
    same_cell = np.all(sign_array(A @ X - tau[:, None]) == sign_array(A @ Xp - tau[:, None]), axis=0)
    dist = np.linalg.norm(X - Xp, axis=0)[same_cell]
    worst = float(dist.max() / (delta / 4)) if dist.size else 0.0
    return PropertyReport("tessellation", q, n, s, delta, int(same_cell.sum()),
                          int(np.count_nonzero(dist > delta / 4)), worst,
                          {"pairs_sampled": pair_trials})


def quotient_witness(ens, e, l1_budget: Optional[float] = None, solver: Optional[SolverConfig] = None,
                     return_report: bool = False):
    """Minimum-l1 u with Au = e.

    With ``return_report`` also returns a dict holding ||u||_1, the
    normalized ratio ||u||_1 sqrt(q) / (sqrt(q / ln(n/q)) ||e||_2) and
    whether ||u||_1 fits the budget.
    """
    A = as_ensemble(ens).matrix
    q, n = A.shape
    if q >= n:
        raise InvalidArgument(f"need q < n for an underdetermined system, got q={q}, n={n}")
    e = np.asarray(e, dtype=np.float64)
    u = basis_pursuit(A, e, solver)
    if not return_report:
        return u
    l1 = float(np.abs(u).sum())
    enorm = float(np.linalg.norm(e))
    ratio = l1 * math.sqrt(q) / (math.sqrt(q / math.log(n / q)) * enorm) if enorm > 0 else 0.0
    return u, {"l1": l1, "ratio": ratio,
               "within_budget": None if l1_budget is None else l1 <= l1_budget}
