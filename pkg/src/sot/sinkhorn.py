"""Entropy-regularized self-transport with a masked diagonal.

Solves ``min <C, W> - h(W) / lam`` over n x n matrices with unit row and
column sums and a forced zero diagonal. The Gibbs kernel is
``exp(-lam * C)`` off the diagonal and exactly 0 on it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from .exceptions import Infeasible, InvalidCost, NumericalUnderflow, TooLarge, ValidationError
from .matrixcore import DistanceMatrix

ORACLE_MAX_N = 10


@dataclass(frozen=True)
class SinkhornParams:
    """Solver settings.

    One sweep is one column normalization followed by one row normalization.
    With ``marginal_tol=0`` exactly ``max_sweeps`` sweeps are run.
    """

    lam: float = 0.1
    max_sweeps: int = 10
    marginal_tol: float = 0.0
    log_domain: bool = True

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValidationError(f"lambda must be a positive finite number, got {self.lam!r}")
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 1:
            raise ValidationError(f"max_sweeps must be an integer >= 1, got {self.max_sweeps!r}")
        if not self.marginal_tol >= 0:
            raise ValidationError(f"marginal_tol must be >= 0, got {self.marginal_tol!r}")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    w: np.ndarray
    marginal_err: float
    sweeps_used: int

    @property
    def n(self) -> int:
        return self.w.shape[0]


def marginal_error(w) -> float:
    """Largest deviation of any row or column sum from 1."""
    w = np.asarray(w, dtype=np.float64)
    return float(max(np.abs(w.sum(axis=1) - 1.0).max(), np.abs(w.sum(axis=0) - 1.0).max()))


def entropy(plan) -> float:
    """Shannon entropy ``-sum w log w`` (natural log, ``0 log 0 = 0``)."""
    w = plan.w if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    return float(entr(w).sum())


def _masked_cost(cost) -> np.ndarray:
    if not isinstance(cost, DistanceMatrix):
        raise InvalidCost("cost must be a DistanceMatrix")
    if not cost.masked:
        raise InvalidCost("cost diagonal must be masked before solving")
    return cost.dmat


def _neg_lse_rows(a):
    """``-log(sum(exp(a), axis=1))`` with the row max factored out."""
    m = a.max(axis=1)
    m[~np.isfinite(m)] = 0.0
    out = a - m[:, None]
    np.exp(out, out=out)
    return -(np.log(out.sum(axis=1)) + m)


def _solve_log(c, p):
    n = c.shape[0]
    logk = -p.lam * c
    np.fill_diagonal(logk, -np.inf)
    logk_t = np.ascontiguousarray(logk.T)
    f = np.zeros(n)
    g = np.zeros(n)
    sweeps = 0
    for sweeps in range(1, p.max_sweeps + 1):
        g = _neg_lse_rows(logk_t + f[None, :])
        f = _neg_lse_rows(logk + g[None, :])
        if p.marginal_tol > 0:
            # rows are exact after the row step; columns carry the error
            colsum = np.exp(logk_t + f[None, :] + g[:, None]).sum(axis=1)
            if np.abs(colsum - 1.0).max() <= p.marginal_tol:
                break
    return np.exp(logk + f[:, None] + g[None, :]), sweeps


def _solve_linear(c, p):
    n = c.shape[0]
    k = np.exp(-p.lam * c)
    np.fill_diagonal(k, 0.0)
    u = np.ones(n)
    v = np.ones(n)
    sweeps = 0
    for sweeps in range(1, p.max_sweeps + 1):
        col = k.T @ u
        if not (col > 0).all():
            raise NumericalUnderflow(f"kernel column sum underflowed at sweep {sweeps}; use log_domain=True")
        v = 1.0 / col
        row = k @ v
        if not (row > 0).all():
            raise NumericalUnderflow(f"kernel row sum underflowed at sweep {sweeps}; use log_domain=True")
        u = 1.0 / row
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise NumericalUnderflow(f"scaling vector overflowed at sweep {sweeps}; use log_domain=True")
        if p.marginal_tol > 0 and marginal_error(u[:, None] * k * v[None, :]) <= p.marginal_tol:
            break
    return u[:, None] * k * v[None, :], sweeps


def sinkhorn_solve(cost: DistanceMatrix, params: SinkhornParams | None = None) -> TransportPlan:
    """Alternate column and row scalings of the masked Gibbs kernel.

    The last operation is always a row normalization, so row sums are exact
    up to rounding and ``marginal_err`` is dominated by the column sums.
    """
    p = params or SinkhornParams()
    c = _masked_cost(cost)
    w, sweeps = (_solve_log if p.log_domain else _solve_linear)(c, p)
    np.fill_diagonal(w, 0.0)
    w.flags.writeable = False
    return TransportPlan(w=w, marginal_err=marginal_error(w), sweeps_used=sweeps)


def transport_cost(cost, w) -> float:
    """Frobenius product of the off-diagonal cost with a plan."""
    c = np.array(cost.dmat if isinstance(cost, DistanceMatrix) else cost, dtype=np.float64)
    w = w.w if isinstance(w, TransportPlan) else np.asarray(w, dtype=np.float64)
    np.fill_diagonal(c, 0.0)
    return float((c * w).sum())


def exact_selfmatch_oracle(cost: DistanceMatrix, chunk: int = 200_000):
    """Best fixed-point-free permutation by exhaustive enumeration.

    Returns ``(perm, objective)`` where ``perm[i]`` is the item matched to
    ``i``. Ties go to the lexicographically smallest permutation.
    """
    c = cost.dmat if isinstance(cost, DistanceMatrix) else np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    if n < 2:
        raise Infeasible("a derangement needs at least 2 items")
    if n > ORACLE_MAX_N:
        raise TooLarge(n, ORACLE_MAX_N)
    rows = np.arange(n)
    best_perm, best_obj = None, math.inf
    perms = itertools.permutations(range(n))
    while True:
        block = np.array(list(itertools.islice(perms, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        block = block[(block != rows).all(axis=1)]
        if block.size == 0:
            continue
        obj = c[rows, block].sum(axis=1)
        i = int(np.argmin(obj))  # first minimum, blocks are in lexicographic order
        if obj[i] < best_obj:
            best_obj, best_perm = float(obj[i]), tuple(int(v) for v in block[i])
    return best_perm, best_obj


def permutation_matrix(perm) -> np.ndarray:
    n = len(perm)
    m = np.zeros((n, n))
    m[np.arange(n), np.asarray(perm)] = 1.0
    return m
