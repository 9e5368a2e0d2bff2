"""Variance-bound construction and testing.

The central program picks a slack matrix S that is positive semidefinite,
cancels the variance matrix A on every unobservable pair, and minimizes a
convex objective; the bound is B = A + S. Both this program and the
admissibility test are solved with a consensus ADMM over closed-form
proximal maps and cone projections, so no external conic solver is needed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    Infeasible,
    InvalidN,
    MaxIterations,
    NonDiagonalW,
    NonPositiveWeight,
    NotASlackMatrix,
    UnsupportedObjective,
)

# -- objectives -----------------------------------------------------------------


@dataclass(frozen=True)
class SchattenTerm:
    """Schatten p-norm of the bound B = A + S; strictly monotone for p < inf."""

    p: float

    def __post_init__(self):
        if self.p < 1:
            raise UnsupportedObjective(f"Schatten term needs p >= 1, got {self.p}")


@dataclass(frozen=True, eq=False)
class TargetedTerm:
    """Trace inner product <S, W> against a symmetric targeting matrix W.

    Strictly monotone exactly when W is positive definite.
    """

    W: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", linalg.check_symmetric(self.W, name="W"))


@dataclass(frozen=True)
class FrobeniusSquaredTerm:
    """Squared Frobenius norm of the bound B = A + S; strictly monotone."""


Term = SchattenTerm | TargetedTerm | FrobeniusSquaredTerm


def _term_is_strictly_monotone(term):
    if isinstance(term, FrobeniusSquaredTerm):
        return True
    if isinstance(term, SchattenTerm):
        return not math.isinf(term.p)
    if isinstance(term, TargetedTerm):
        band = linalg.ZERO_BAND * max(1.0, float(np.linalg.norm(term.W)))
        return linalg.min_eigenvalue(term.W) > band
    raise UnsupportedObjective(f"unknown objective term {term!r}")


def _term_value(term, S, A):
    if isinstance(term, FrobeniusSquaredTerm):
        return linalg.schatten_norm(A + S, 2) ** 2
    if isinstance(term, SchattenTerm):
        return linalg.schatten_norm(A + S, term.p)
    if isinstance(term, TargetedTerm):
        return float(np.sum(S * term.W))
    raise UnsupportedObjective(f"unknown objective term {term!r}")


@dataclass(frozen=True)
class Objective:
    """Weighted sum of convex terms; every weight must be positive and at least
    one term must be strictly monotone, otherwise the program may return an
    inadmissible bound."""

    terms: tuple[tuple[float, Term], ...]

    def __post_init__(self):
        if not self.terms:
            raise UnsupportedObjective("objective needs at least one term")
        for weight, term in self.terms:
            if not weight > 0:
                raise UnsupportedObjective(f"term weights must be positive, got {weight}")
            if not isinstance(term, (SchattenTerm, TargetedTerm, FrobeniusSquaredTerm)):
                raise UnsupportedObjective(f"unknown objective term {term!r}")
        object.__setattr__(self, "terms", tuple(self.terms))

    @staticmethod
    def schatten(p, weight=1.0):
        return Objective(terms=((weight, SchattenTerm(p=float(p))),))

    @staticmethod
    def frobenius_squared(weight=1.0):
        return Objective(terms=((weight, FrobeniusSquaredTerm()),))

    @staticmethod
    def targeted(W, weight=1.0):
        return Objective(terms=((weight, TargetedTerm(W=np.asarray(W, dtype=float))),))

    @staticmethod
    def composite(weighted_terms):
        return Objective(terms=tuple(weighted_terms))

    def value(self, S, A):
        return sum(w * _term_value(t, S, A) for w, t in self.terms)

    def is_strictly_monotone(self):
        return any(_term_is_strictly_monotone(t) for _, t in self.terms)


# -- solver configuration and results ---------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    max_iterations: int = 50_000
    eps_abs: float = 1e-9
    eps_rel: float = 1e-7
    feasibility_tol: float = 1e-7
    adaptive_rho: bool = False

    def __post_init__(self):
        for name in ("rho", "max_iterations", "eps_abs", "eps_rel", "feasibility_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver config field {name} must be positive")


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective_value: float
    min_eig_slack: float
    max_omega_violation: float
    converged: bool

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "objective_value": self.objective_value,
            "min_eig_slack": self.min_eig_slack,
            "max_omega_violation": self.max_omega_violation,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class BoundResult:
    S_star: np.ndarray
    B_star: np.ndarray
    report: SolverReport


@dataclass(frozen=True, eq=False)
class AdmissibilityVerdict:
    alpha: float
    witness: np.ndarray
    admissible: bool
    early_exit: bool
    report: SolverReport


# -- consensus ADMM core -----------------------------------------------------------


def _normalize_omega(omega):
    return {(k, l) if k <= l else (l, k) for k, l in omega}


def _omega_index_arrays(omega):
    ks, ls = [], []
    for k, l in _normalize_omega(omega):
        ks.append(k)
        ls.append(l)
        if k != l:
            ks.append(l)
            ls.append(k)
    return np.asarray(ks, dtype=np.intp), np.asarray(ls, dtype=np.intp)


def _affine_projector(rows, cols, values):
    def project(V):
        X = V.copy()
        X[rows, cols] = values
        return X
    return project


@dataclass(frozen=True, eq=False)
class _AdmmExit:
    Z: np.ndarray
    primal: float
    dual: float
    iterations: int
    converged: bool
    probed: bool


def _consensus_admm(blocks, Z0, dim, config, probe=None, probe_every=100, accept=None):
    """Generic consensus ADMM over proximable blocks.

    Each block maps (input matrix, step) to its prox / projection. Stopping:
    primal residual <= eps_abs * dim + eps_rel * ||Z||_F, dual residual
    against the analogous dual scale, and (when given) an ``accept`` predicate
    on the consensus iterate, so the caller's feasibility contract holds at
    exit. An optional probe sees the iterate every ``probe_every`` iterations
    and may stop the run early.
    """
    N = len(blocks)
    rho = config.rho
    Z = Z0.copy()
    U = [np.zeros_like(Z0) for _ in range(N)]
    r_norm = s_norm = float("inf")
    it = 0
    for it in range(1, config.max_iterations + 1):
        t = 1.0 / rho
        Xs = [blocks[i](Z - U[i], t) for i in range(N)]
        Z_new = Xs[0] + U[0]
        for i in range(1, N):
            Z_new += Xs[i] + U[i]
        Z_new /= N
        r_norm = math.sqrt(sum(float(np.linalg.norm(Xs[i] - Z_new)) ** 2 for i in range(N)))
        s_norm = rho * math.sqrt(N) * float(np.linalg.norm(Z_new - Z))
        for i in range(N):
            U[i] += Xs[i] - Z_new
        Z = Z_new
        eps_pri = config.eps_abs * dim + config.eps_rel * float(np.linalg.norm(Z))
        dual_scale = rho * math.sqrt(sum(float(np.linalg.norm(u)) ** 2 for u in U))
        eps_dual = config.eps_abs * dim + config.eps_rel * dual_scale
        if r_norm <= eps_pri and s_norm <= eps_dual and (accept is None or accept(Z)):
            return _AdmmExit(Z, r_norm, s_norm, it, True, False)
        if probe is not None and it % probe_every == 0 and probe(Z):
            return _AdmmExit(Z, r_norm, s_norm, it, False, True)
        if config.adaptive_rho and it % 50 == 0:
            # residual balancing; rescale scaled duals to keep rho * U invariant
            if r_norm > 10.0 * s_norm:
                rho *= 2.0
                U = [u / 2.0 for u in U]
            elif s_norm > 10.0 * r_norm:
                rho /= 2.0
                U = [u * 2.0 for u in U]
    return _AdmmExit(Z, r_norm, s_norm, it, False, False)


def _term_prox(term, weight, A):
    """Prox closure for one weighted objective term at step t."""
    if isinstance(term, TargetedTerm):
        W = weight * term.W
        return lambda V, t: linalg.prox_linear(V, t, W)
    if isinstance(term, FrobeniusSquaredTerm):
        return lambda V, t: linalg.prox_frobenius_squared(V, t * weight, A)
    if isinstance(term, SchattenTerm):
        p = term.p
        return lambda V, t: linalg.prox_schatten(V, t * weight, p, shift=A)
    raise UnsupportedObjective(f"unknown objective term {term!r}")


def aronow_samii_slack(A, omega):
    """Pairwise Young's-inequality slack: cancels A on every unobservable pair
    and books the magnitudes on the two diagonals. Positive semidefinite by
    construction (a sum of 2x2 PSD part matrices)."""
    A = linalg.check_symmetric(A, name="A")
    S = np.zeros_like(A)
    for k, l in _normalize_omega(omega):
        if k == l:
            S[k, k] = -A[k, k]
            continue
        S[k, l] = S[l, k] = -A[k, l]
        S[k, k] += abs(A[k, l])
        S[l, l] += abs(A[k, l])
    return S


def solve_optvb(problem, objective, config=None):
    """Minimize the objective over the set of valid slack matrices.

    Consensus ADMM with one block per objective term plus the positive
    semidefinite cone and the affine slice fixing unobservable entries to -A.
    The returned slack is the final consensus iterate passed through the
    affine projection, so those entries are exact; any residual negative
    eigenvalue is reported, not re-projected.
    """
    config = config or SolverConfig()
    if not objective.is_strictly_monotone():
        has_opnorm = any(
            isinstance(t, SchattenTerm) and math.isinf(t.p) for _, t in objective.terms
        )
        hint = (
            " (the operator norm alone can return a dominated bound; compose it "
            "with a small frobenius-squared term)" if has_opnorm else ""
        )
        raise UnsupportedObjective("objective has no strictly monotone term" + hint)
    A = problem.A
    dim = A.shape[0]
    for k, l in problem.omega:
        if k == l and A[k, k] > config.feasibility_tol:
            raise Infeasible(
                f"diagonal index {k} is unobservable but A[{k},{k}] = {A[k, k]:.3e} > 0; "
                "no positive semidefinite slack can cancel a positive diagonal "
                "(drop the coordinate or lower the threshold c)"
            )
    rows, cols = _omega_index_arrays(problem.omega)
    values = -A[rows, cols] if rows.size else np.zeros(0)
    affine = _affine_projector(rows, cols, values)
    blocks = [lambda V, t: affine(V), lambda V, t: linalg.project_psd(V)]
    blocks += [_term_prox(term, weight, A) for weight, term in objective.terms]

    def feasible_enough(Z):
        return linalg.min_eigenvalue(linalg.symmetrize(affine(Z))) >= -config.feasibility_tol

    Z0 = aronow_samii_slack(A, problem.omega)
    exit_ = _consensus_admm(blocks, Z0, dim, config, accept=feasible_enough)

    S_star = affine(exit_.Z)
    B_star = A + S_star
    omega_violation = float(np.abs(S_star[rows, cols] + A[rows, cols]).max()) if rows.size else 0.0
    report = SolverReport(
        iterations=exit_.iterations,
        primal_residual=exit_.primal,
        dual_residual=exit_.dual,
        objective_value=objective.value(S_star, A),
        min_eig_slack=linalg.min_eigenvalue(linalg.symmetrize(S_star)),
        max_omega_violation=omega_violation,
        converged=exit_.converged,
    )
    result = BoundResult(S_star=S_star, B_star=B_star, report=report)
    if not exit_.converged:
        raise MaxIterations(
            f"bound solver hit {config.max_iterations} iterations "
            f"(primal {exit_.primal:.2e}, dual {exit_.dual:.2e})",
            result=result,
        )
    return result


def test_admissibility(S, omega, config=None, decision_tol=None, early_exit=False):
    """Search for a valid slack matrix dominated by S.

    Maximizes trace(S - T) over matrices T that agree with S on the
    unobservable pairs and satisfy 0 <= T <= S in the semidefinite order. A
    positive optimum certifies that the bound carrying S is dominated
    (inadmissible); the maximizer is returned as the witness.

    With ``early_exit`` the search stops as soon as a feasible iterate beats
    the decision tolerance tenfold; the reported alpha is then only a lower
    bound on the optimum.

    Degenerate inputs whose sandwich 0 <= T <= S admits no strictly feasible
    point (a singular S can do this) may converge slowly or hit the iteration
    cap; the MaxIterations error then carries the best iterate, whose trace
    gap is still a certified lower bound on alpha once the witness is
    feasible within tolerance.
    """
    config = config or SolverConfig()
    S = linalg.check_symmetric(S, name="S")
    dim = S.shape[0]
    scale = max(1.0, float(np.linalg.norm(S)))
    min_eig_in = linalg.min_eigenvalue(S)
    if min_eig_in < -config.feasibility_tol * scale:
        raise NotASlackMatrix(
            f"input has eigenvalue {min_eig_in:.3e}; "
            "slack matrices must be positive semidefinite"
        )
    if min_eig_in < 0.0:
        # eigenvalue dust within tolerance would make the sandwich
        # 0 <= T <= S infeasible in exact arithmetic and stall the splitting;
        # the projection moves S (and alpha) by at most that dust
        S = linalg.project_psd(S)
    if decision_tol is None:
        decision_tol = 1e-5 * (1.0 + float(np.trace(S)))

    rows, cols = _omega_index_arrays(omega)
    values = S[rows, cols] if rows.size else np.zeros(0)
    affine = _affine_projector(rows, cols, values)
    eye = np.eye(dim)
    blocks = [
        lambda V, t: affine(V),
        lambda V, t: linalg.project_psd(V),
        lambda V, t: S - linalg.project_psd(S - V),
        lambda V, t: V - t * eye,  # minimize trace(T)
    ]

    trace_S = float(np.trace(S))

    def certified_dominator(Z):
        cand = affine(Z)
        if trace_S - float(np.trace(cand)) <= 10.0 * decision_tol:
            return False
        tol = config.feasibility_tol * scale
        return (linalg.min_eigenvalue(linalg.symmetrize(cand)) >= -tol
                and linalg.min_eigenvalue(linalg.symmetrize(S - cand)) >= -tol)

    def witness_feasible(Z):
        cand = linalg.symmetrize(affine(Z))
        tol = config.feasibility_tol * scale
        return (linalg.min_eigenvalue(cand) >= -tol
                and linalg.min_eigenvalue(linalg.symmetrize(S - cand)) >= -tol)

    exit_ = _consensus_admm(
        blocks, S.copy(), dim, config,
        probe=certified_dominator if early_exit else None,
        accept=witness_feasible,
    )
    witness = affine(exit_.Z)
    alpha = trace_S - float(np.trace(witness))
    report = SolverReport(
        iterations=exit_.iterations,
        primal_residual=exit_.primal,
        dual_residual=exit_.dual,
        objective_value=alpha,
        min_eig_slack=linalg.min_eigenvalue(linalg.symmetrize(witness)),
        max_omega_violation=0.0,
        converged=exit_.converged,
    )
    verdict = AdmissibilityVerdict(
        alpha=alpha,
        witness=witness,
        admissible=bool(alpha <= decision_tol) and not exit_.probed,
        early_exit=exit_.probed,
        report=report,
    )
    if not exit_.converged and not exit_.probed:
        raise MaxIterations(
            f"admissibility test hit {config.max_iterations} iterations "
            f"(primal {exit_.primal:.2e}, dual {exit_.dual:.2e})",
            result=verdict,
        )
    return verdict


# -- closed-form bounds and targeting matrices ---------------------------------------


def neyman_bound(n):
    """Classic bound for the difference in means under balanced complete
    randomization: (2n / (n-1)) blockdiag(H, H) with H = I - 11'/n."""
    if n < 2:
        raise InvalidN(f"need n >= 2, got {n}")
    H = np.eye(n) - np.ones((n, n)) / n
    B = np.zeros((2 * n, 2 * n))
    scale = 2.0 * n / (n - 1.0)
    B[:n, :n] = scale * H
    B[n:, n:] = scale * H
    return B


def generalized_as_slack(A, omega, W):
    """Weighted pairwise slack: block entries |A_kl| sqrt(w_ll / w_kk).

    W must be diagonal with strictly positive entries. For designs where the
    unobservable pairs are exactly the within-unit pairs, this is the exact
    minimizer of the targeted objective <S, W>.
    """
    A = linalg.check_symmetric(A, name="A")
    W = np.asarray(W, dtype=float)
    if W.shape != A.shape:
        raise DimensionMismatch(f"W shape {W.shape} != A shape {A.shape}")
    if np.any(W != np.diag(np.diag(W))):
        raise NonDiagonalW("generalized pairwise slack needs a diagonal W")
    w = np.diag(W)
    if np.any(w <= 0):
        raise NonPositiveWeight(f"diagonal weights must be positive, got min {w.min()!r}")
    S = np.zeros_like(A)
    for k, l in _normalize_omega(omega):
        if k == l:
            S[k, k] = -A[k, k]
            continue
        S[k, l] = S[l, k] = -A[k, l]
        S[k, k] += abs(A[k, l]) * math.sqrt(w[l] / w[k])
        S[l, l] += abs(A[k, l]) * math.sqrt(w[k] / w[l])
    return S


def targeting_from_vectors(vectors, gamma=0.0, dim=None):
    """Targeting matrix from anticipated outcome vectors: sum of weighted outer
    products plus gamma * I. Warns when the result is not positive definite."""
    vectors = list(vectors)
    if gamma < 0:
        raise NonPositiveWeight(f"gamma must be nonnegative, got {gamma}")
    if not vectors and dim is None:
        raise DimensionMismatch("need at least one vector or an explicit dimension")
    if dim is None:
        dim = len(np.asarray(vectors[0][1], dtype=float))
    W = gamma * np.eye(dim)
    for q, vec in vectors:
        if q < 0:
            raise NonPositiveWeight(f"vector weights must be nonnegative, got {q}")
        v = np.asarray(vec, dtype=float)
        if v.shape != (dim,):
            raise DimensionMismatch(f"vector shape {v.shape} != ({dim},)")
        W += q * np.outer(v, v)
    band = linalg.ZERO_BAND * max(1.0, float(np.linalg.norm(W)))
    if linalg.min_eigenvalue(W) <= band:
        warnings.warn(
            "targeting matrix is not positive definite; the targeted program "
            "alone may return a dominated bound",
            RuntimeWarning,
            stacklevel=2,
        )
    return W


def targeting_from_covariates(X, sigma):
    """Targeting matrix for outcomes anticipated linear in covariates:
    blockdiag(XX' + sigma^2 I, XX' + sigma^2 I)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch("covariates must be a 2-d array")
    if not sigma > 0:
        raise NonPositiveWeight(f"sigma must be positive, got {sigma}")
    n = X.shape[0]
    block = X @ X.T + sigma**2 * np.eye(n)
    W = np.zeros((2 * n, 2 * n))
    W[:n, :n] = block
    W[n:, n:] = block
    return W


@dataclass(frozen=True)
class BoundValidation:
    conservative: bool
    design_compatible: bool
    min_eig_gap: float
    max_omega_entry: float

    @property
    def valid(self):
        return self.conservative and self.design_compatible

    def as_dict(self):
        return {
            "conservative": self.conservative,
            "design_compatible": self.design_compatible,
            "min_eig_gap": self.min_eig_gap,
            "max_omega_entry": self.max_omega_entry,
        }


def validate_bound(A, B, omega, tol=1e-7):
    """Check conservativeness (B - A positive semidefinite within tol) and
    design compatibility (B vanishes on every unobservable pair within tol)."""
    A = linalg.check_symmetric(A, name="A")
    B = linalg.check_symmetric(B, name="B")
    if A.shape != B.shape:
        raise DimensionMismatch(f"A shape {A.shape} != B shape {B.shape}")
    min_eig_gap = linalg.min_eigenvalue(linalg.symmetrize(B - A))
    rows, cols = _omega_index_arrays(omega)
    max_entry = float(np.abs(B[rows, cols]).max()) if rows.size else 0.0
    return BoundValidation(
        conservative=bool(min_eig_gap >= -tol),
        design_compatible=bool(max_entry <= tol),
        min_eig_gap=float(min_eig_gap),
        max_omega_entry=max_entry,
    )
