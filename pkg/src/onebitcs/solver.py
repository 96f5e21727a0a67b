"""First-order solvers for the l1 programs used by the package.

``solve_l1_cone`` handles

    minimize ||z||_1  subject to  ||z||_2 <= radius,  y_i (<a_i, z> - tau_i) >= 0

with graph-form ADMM: the l1 term and the ball are handled together by the
prox ``P_ball(soft_threshold(.))``, the sign constraints by clipping, and the
coupling ``w = Gz`` by a single cached Cholesky factor of ``I + G^T G``.
Once the iterates settle, the active set is read off and the problem is
solved exactly on it ("polishing"); a polished point is only returned when
it passes a KKT check, which makes the returned point optimal to round-off.
Infeasibility is detected from diverging dual iterates, which yield a Farkas
certificate ``lambda >= 0, lambda^T h > radius * ||G^T lambda||``.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog, nnls

from .errors import InfeasibleError, InvalidArgument, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 50_000
    primal_tol: float = 1e-6
    feasibility_tol: float = 1e-8
    step_rule: str = "adaptive"  # "adaptive" residual balancing or "fixed" penalty
    method: str = "hybrid"  # "hybrid": LP vertex first, ADMM if the ball binds; "admm"
    rho: float = 100.0
    relaxation: float = 1.6
    block_balance: float = 3.0
    check_every: int = 20

    def __post_init__(self):
        if self.primal_tol <= 0 or self.feasibility_tol <= 0:
            raise InvalidArgument("solver tolerances must be positive")
        if self.max_iters < 1:
            raise InvalidArgument("max_iters must be >= 1")
        if self.step_rule not in ("adaptive", "fixed"):
            raise InvalidArgument(f"unknown step rule {self.step_rule!r}")
        if self.method not in ("hybrid", "admm"):
            raise InvalidArgument(f"unknown method {self.method!r}")


@dataclass
class SolveInfo:
    iterations: int = 0
    method: str = "trivial"
    polished: bool = False
    residual: float = np.inf
    objective: float = np.inf


def soft_threshold(v, kappa):
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def project_ball(v, radius=1.0):
    nrm = np.linalg.norm(v)
    return v if nrm <= radius else v * (radius / nrm)


def cone_residuals(A, y, tau, z, radius):
    """Per-row violation scaled by ``max(1, ||a_i|| * radius)`` and the
    ball excess ``max(0, ||z|| - radius)``."""
    A = np.asarray(A, dtype=np.float64)
    viol = np.maximum(-(y * (A @ z - tau)), 0.0)
    scale = np.maximum(1.0, np.linalg.norm(A, axis=1) * radius)
    return viol / scale, max(0.0, float(np.linalg.norm(z)) - radius)


class _ConeProblem:
    """Unit-radius form with normalized rows: G zeta >= h, ||zeta|| <= 1."""

    def __init__(self, A, y, tau, radius):
        rows = y[:, None] * A
        self.row_norms = np.linalg.norm(A, axis=1)
        safe = np.where(self.row_norms > 0, self.row_norms, 1.0)
        self.G = rows / safe[:, None]
        self.h = y * tau / (radius * safe)
        self.radius = radius
        self.q, self.n = A.shape
        # maps normalized violations back to the scale of cone_residuals
        self.weight = radius * safe / np.maximum(1.0, self.row_norms * radius)
        self.zero_rows = self.row_norms == 0

    def residual(self, zeta):
        viol = np.maximum(self.h - self.G @ zeta, 0.0) * self.weight
        ball = max(0.0, float(np.linalg.norm(zeta)) - 1.0) * self.radius
        return max(float(viol.max(initial=0.0)), ball)

    def certificate_gap(self, lam):
        """Lower bound on the scaled violation of every point of the ball."""
        lam = np.maximum(lam, 0.0)
        total = lam.sum()
        if total <= 0:
            return -np.inf
        lam = lam / total
        gap = lam @ self.h - np.linalg.norm(self.G.T @ lam)
        return gap * min(1.0, float(self.weight.min()))

    def polish(self, x, score, dual, spread=2):
        """Exact solve on active sets guessed from an ADMM iterate.

        Coordinates are ranked by the pre-threshold prox input ``score`` and
        rows by slack (or dual weight); a few support sizes around the
        current one are tried. Only KKT-certified points are returned.
        """
        slack = self.G @ x - self.h
        coord_rank = np.argsort(-np.abs(score), kind="stable")
        row_ranks = (np.argsort(slack, kind="stable"), np.argsort(-dual, kind="stable"))
        k0 = int(np.count_nonzero(x))
        seen = set()
        for k in sorted(range(max(1, k0 - spread), min(self.n, k0 + spread) + 1),
                        key=lambda k: abs(k - k0)):
            S = np.sort(coord_rank[:k])
            sigma = np.sign(score[S])
            # a nondegenerate vertex has |S| active rows, |S| - 1 when the ball binds
            for nj in (k, k - 1):
                if not 0 <= nj <= self.q:
                    continue
                for rank in row_ranks:
                    J = np.sort(rank[:nj])
                    key = (S.tobytes(), J.tobytes())
                    if key in seen:
                        continue
                    seen.add(key)
                    z = self._solve_on(S, J, sigma)
                    if z is not None and self._kkt_ok(z, J):
                        return z
        return None

    def _solve_on(self, S, J, sigma):
        if S.size == 0:
            return None
        M = self.G[np.ix_(J, S)]
        b = self.h[J]
        if J.size:
            U, sv, Vt = np.linalg.svd(M, full_matrices=True)
            rank = int(np.sum(sv > 1e-10 * sv.max())) if sv.size else 0
        else:
            Vt = np.eye(S.size)
            rank = 0
        if rank:
            zS = Vt[:rank].T @ ((U[:, :rank].T @ b) / sv[:rank])
            if np.linalg.norm(M @ zS - b) > 1e-9 * (1.0 + np.linalg.norm(b)):
                return None
        else:
            zS = np.zeros(S.size)
        N = Vt[rank:].T
        if N.shape[1]:
            d = N.T @ sigma
            dn = np.linalg.norm(d)
            if dn > 1e-12:
                rem = 1.0 - zS @ zS
                if rem < 0:
                    return None
                zS = zS - np.sqrt(rem) * (N @ d) / dn
        z = np.zeros(self.n)
        z[S] = zS
        return z

    def _kkt_ok(self, z, J, tol=1e-9):
        S = np.flatnonzero(z)
        if S.size == 0:
            return False
        if np.any(self.G @ z < self.h - tol) or np.linalg.norm(z) > 1.0 + tol:
            return False
        sigma = np.sign(z[S])
        cols = [self.G[np.ix_(J, S)].T]
        ball_active = abs(np.linalg.norm(z) - 1.0) <= 1e-9
        if ball_active:
            cols.append(-z[S][:, None])
        K = np.hstack(cols) if cols[0].size or ball_active else np.zeros((S.size, 0))
        if K.shape[1] == 0:
            return False
        mult, res = nnls(K, sigma)
        if res > 1e-8 * np.sqrt(S.size):
            return False
        lam = mult[:J.size]
        off = np.setdiff1d(np.arange(self.n), S)
        if off.size and J.size:
            if np.max(np.abs(self.G[np.ix_(J, off)].T @ lam)) > 1.0 + 1e-8:
                return False
        return True


def solve_l1_cone(A, y, tau, radius, solver=None, return_info=False):
    """Minimize ||z||_1 over the ball of ``radius`` intersected with the cone
    of sign constraints ``y_i (<a_i, z> - tau_i) >= 0``.

    Raises ``InfeasibleError`` when the constraints are certified infeasible
    (empty polyhedron, or a Farkas certificate showing that every point of the
    ball violates some constraint by more than ``10^3 * feasibility_tol``), or
    when after ``max_iters`` the best residual still exceeds that level.
    """
    solver = solver or SolverConfig()
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    q, n = A.shape
    if q < 1:
        raise InvalidArgument("need at least one constraint")
    if y.shape != (q,) or tau.shape != (q,):
        raise InvalidArgument(f"y and tau must have length {q}")
    if not radius > 0:
        raise InvalidArgument(f"radius must be positive, got {radius}")
    prob = _ConeProblem(A, y, tau, radius)
    info = SolveInfo()

    if np.all(prob.h <= 0):
        # the origin is feasible and has zero l1 norm
        zeta = np.zeros(n)
    else:
        zeta = None
        if solver.method == "hybrid":
            zeta = _lp_vertex(prob, info)
        if zeta is None:
            zeta = _admm(prob, solver, info)
    info.residual = prob.residual(zeta)
    info.objective = float(np.abs(zeta).sum() * radius)
    z = zeta * radius
    return (z, info) if return_info else z


def _lp_vertex(prob, info):
    """Optimal vertex of the polyhedral part when it lies inside the ball.

    Returns None when the ball binds (the LP optimum leaves the ball) or the
    vertex fails certification; raises when the polyhedron is empty.
    """
    G, h, n = prob.G, prob.h, prob.n
    # z = p - m with p, m in [0, 1]; the box contains the unit ball
    res = linprog(np.ones(2 * n), A_ub=np.hstack([-G, G]), b_ub=-h,
                  bounds=(0.0, 1.0), method="highs-ds")
    if res.status == 2:
        raise InfeasibleError("sign constraints admit no point in the box around the ball")
    if res.status != 0:
        return None
    z_lp = res.x[:n] - res.x[n:]
    if np.linalg.norm(z_lp) > 1.0 + 1e-9:
        return None
    dual = -res.ineqlin.marginals
    zeta = prob.polish(z_lp, z_lp, dual, spread=1)
    if zeta is not None:
        info.method, info.polished = "lp", True
    return zeta


def _admm(prob, solver, info):
    q, n = prob.q, prob.n
    tol = solver.feasibility_tol
    # balance the two blocks of the splitting: G^T G ~ (q/n) I for Gaussian rows
    gamma = solver.block_balance * np.sqrt(n / q)
    G, h = gamma * prob.G, gamma * prob.h
    factor = cho_factor(np.eye(n) + G.T @ G)
    rho = solver.rho
    alpha = solver.relaxation
    x = np.zeros(n)
    w = np.maximum(G @ x, h)
    u1 = np.zeros(n)
    u2 = np.zeros(q)
    u2_mark = u2.copy()
    best, best_res = None, np.inf
    info.method = "admm"

    for it in range(1, solver.max_iters + 1):
        z = cho_solve(factor, (x - u1) + G.T @ (w - u2))
        Gz = G @ z
        zr = alpha * z + (1 - alpha) * x
        Gzr = alpha * Gz + (1 - alpha) * w
        x_old, w_old = x, w
        prox_in = zr + u1
        x = project_ball(soft_threshold(prox_in, 1.0 / rho))
        w = np.maximum(Gzr + u2, h)
        u1 += zr - x
        u2 += Gzr - w

        if it % solver.check_every:
            continue
        info.iterations = it
        r_prim = np.sqrt(np.sum((z - x) ** 2) + np.sum((Gz - w) ** 2))
        r_dual = rho * np.linalg.norm((x - x_old) + G.T @ (w - w_old))

        res = prob.residual(x)
        if res < best_res or (res <= tol and np.abs(x).sum() < np.abs(best).sum()):
            best, best_res = x.copy(), res

        polished = prob.polish(x, prox_in, -u2)
        if polished is not None:
            info.polished = True
            return polished

        gap = max(prob.certificate_gap(-(u2 - u2_mark)), prob.certificate_gap(-u2))
        if gap > 1e3 * tol:
            raise InfeasibleError(
                f"sign constraints infeasible within the ball (certified gap {gap:.3g})",
                residual=gap)
        u2_mark = u2.copy()

        if solver.step_rule == "adaptive":
            if r_prim > 10 * r_dual:
                rho *= 2.0
                u1 /= 2.0
                u2 /= 2.0
                u2_mark /= 2.0
            elif r_dual > 10 * r_prim:
                rho /= 2.0
                u1 *= 2.0
                u2 *= 2.0
                u2_mark *= 2.0

    if best is None or best_res > 1e3 * tol:
        raise InfeasibleError(
            f"no point within tolerance after {solver.max_iters} iterations "
            f"(best residual {best_res:.3g})", residual=best_res)
    if best_res > tol:
        log.warning("l1 cone solve stopped at residual %.3g above tolerance %.3g", best_res, tol)
    return best


def _bp_vertex(A, b):
    """Optimal vertex of the LP form (u = p - m, p, m >= 0), re-solved by
    least squares on its support to clean up round-off."""
    n = A.shape[1]
    res = linprog(np.ones(2 * n), A_eq=np.hstack([A, -A]), b_eq=b, bounds=(0.0, None), method="highs-ds")
    if res.status != 0:
        return None
    u = res.x[:n] - res.x[n:]
    S = np.flatnonzero(u)
    if S.size:
        u = np.zeros(n)
        u[S] = np.linalg.lstsq(A[:, S], b, rcond=None)[0]
    return u


def basis_pursuit(A, b, solver=None, rel_tol=1e-6):
    """Minimize ||u||_1 subject to A u = b for a wide matrix ``A``.

    The hybrid method takes the LP vertex from HiGHS. Otherwise (or if that
    fails) ADMM with an exact affine projection; the returned point is the
    projection of the sparse iterate, so ``||Au - b|| <= rel_tol * ||b||``
    holds up to round-off.
    """
    solver = solver or SolverConfig()
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64)
    q, n = A.shape
    if b.shape != (q,):
        raise InvalidArgument(f"b must have length {q}")
    if q >= n:
        raise InvalidArgument(f"basis pursuit needs q < n, got q={q}, n={n}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    if solver.method == "hybrid":
        out = _bp_vertex(A, b)
        if out is not None and np.linalg.norm(A @ out - b) <= rel_tol * bnorm:
            return out
    gram = cho_factor(A @ A.T)

    scale = np.sqrt(q) / bnorm  # work at unit scale
    bs = b * scale
    zs = np.zeros(n)
    u = np.zeros(n)
    rho = 1.0

    def project_s(v):
        return v - A.T @ cho_solve(gram, A @ v - bs)

    converged = False
    for it in range(1, solver.max_iters + 1):
        x = project_s(zs - u)
        z_old = zs
        zs = soft_threshold(x + u, 1.0 / rho)
        u += x - zs
        if it % solver.check_every == 0:
            r = np.linalg.norm(x - zs)
            s = rho * np.linalg.norm(zs - z_old)
            if r < solver.primal_tol * np.sqrt(n) and s < solver.primal_tol * np.sqrt(n):
                converged = True
                break
            if solver.step_rule == "adaptive":
                if r > 10 * s:
                    rho *= 2.0
                    u /= 2.0
                elif s > 10 * r:
                    rho /= 2.0
                    u *= 2.0
    if not converged:
        raise NumericalError(f"basis pursuit did not converge in {solver.max_iters} iterations")
    out = project_s(zs) / scale
    # polish: least squares on the detected support, kept if it is still
    # feasible, sign-consistent and no worse in l1
    S = np.flatnonzero(np.abs(zs) > 1e-6 * np.abs(zs).max(initial=0.0))
    if 0 < S.size <= q:
        sol = np.linalg.lstsq(A[:, S], b, rcond=None)[0]
        cand = np.zeros(n)
        cand[S] = sol
        if (np.linalg.norm(A @ cand - b) <= 1e-3 * rel_tol * bnorm
                and np.all(np.sign(sol) == np.sign(zs[S]))
                and np.abs(cand).sum() <= np.abs(out).sum()):
            out = cand
    if np.linalg.norm(A @ out - b) > rel_tol * bnorm:
        raise NumericalError("affine projection lost accuracy")
    return out
