"""Sparse assembly and direct solves for bordered saddle-point systems."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolverError",
    "SingularSystem",
    "ResidualTooLarge",
    "InfSupFailure",
    "compress",
    "Factorization",
    "factor",
    "direct_solve",
    "LinearSystem",
    "SaddleSolution",
    "bordered_saddle",
    "split_solution",
    "solve_system",
    "solve_saddle",
]

RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-14
DENSE_THRESHOLD = 200
INF_SUP_RATIO = 1e8
REGULARIZATION = 1e-10
REFINEMENT_TOL = 1e-14
# residual a fast path must reach before its answer is kept
ACCEPT_TOL = 1e-12
MAX_REFINEMENT = 40
KRYLOV_RESTART = 50
KRYLOV_MAXITER = 10


class SolverError(RuntimeError):
    pass


class SingularSystem(SolverError):
    pass


class ResidualTooLarge(SolverError):
    pass


class InfSupFailure(SolverError):
    pass


def compress(rows, cols, values, shape) -> sp.csr_matrix:
    """Sum duplicate triplets into a CSR matrix with sorted indices."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    nrows, ncols = shape
    if not (len(rows) == len(cols) == len(values)):
        raise ValueError("triplet arrays must have equal length")
    if len(rows) and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
        raise IndexError(f"triplet index outside declared shape {shape}")
    mat = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _symmetric_ordering(matrix: sp.csc_matrix):
    """Fill-reducing ordering of ``|A| + |A^T|``; ``None`` when AMD is unavailable."""
    try:
        from cvxopt import amd, spmatrix
    except ImportError:
        return None
    pat = sp.tril(abs(matrix) + abs(matrix.T)).tocoo()
    order = amd.order(spmatrix(1.0, pat.row.tolist(), pat.col.tolist(), pat.shape))
    return np.asarray(order, dtype=np.int64).ravel()


class Factorization:
    """Direct LU solve with a post-solve residual check.

    Small systems use dense LU with partial pivoting.  Large ones first try a
    regularized factorization: zero diagonal entries (pressure and multiplier
    rows of a saddle system) are replaced by ``-REGULARIZATION * max|A|``, the
    matrix is reordered symmetrically by approximate minimum degree and
    factored without pivoting, and every solve is corrected by iterative
    refinement against the unmodified matrix.  This avoids the fill-in of
    off-diagonal pivoting on zero blocks.  If refinement stalls (large pivot
    growth on distorted meshes), GMRES preconditioned by the same factors
    finishes the solve.  When all of that fails a pivoting sparse LU is
    used instead.
    """

    def __init__(self, matrix, residual_tol: float = RESIDUAL_TOL, regularize: bool = True):
        self.matrix = sp.csc_matrix(matrix)
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {self.matrix.shape}")
        self.residual_tol = residual_tol
        self.amax = abs(self.matrix).max() if self.matrix.nnz else 0.0
        if self.amax == 0.0:
            raise SingularSystem("zero matrix")
        self.dense = n < DENSE_THRESHOLD
        self.refinement_steps = 0
        self.krylov_solves = 0
        self._lu = None
        self._perm = None
        if self.dense:
            with warnings.catch_warnings():
                # exact zero pivots are reported by _check_pivots
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(self.matrix.toarray(), check_finite=True)
            self._check_pivots(np.abs(np.diag(lu)))
            self._lu = (lu, piv)
            self.method = "dense"
        elif regularize and self._factor_regularized():
            self.method = "regularized"
        else:
            self._factor_pivoting()

    def _check_pivots(self, pivots):
        threshold = PIVOT_TOL * self.amax
        if pivots.min() <= threshold:
            raise SingularSystem(
                f"pivot {pivots.min():.3e} below {threshold:.3e} (row {int(np.argmin(pivots))})")

    def _factor_regularized(self) -> bool:
        diag = self.matrix.diagonal()
        shift = np.where(diag == 0.0, -REGULARIZATION * self.amax, 0.0)
        perm = _symmetric_ordering(self.matrix)
        shifted = (self.matrix + sp.diags(shift)).tocsc()
        try:
            if perm is None:
                lu = spla.splu(shifted, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                               options=dict(SymmetricMode=True))
            else:
                lu = spla.splu(shifted[perm][:, perm].tocsc(), permc_spec="NATURAL",
                               diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
        except RuntimeError:
            return False
        pivots = np.abs(lu.U.diagonal())
        if not np.all(np.isfinite(pivots)) or pivots.min() <= PIVOT_TOL * REGULARIZATION * self.amax:
            return False
        self._lu, self._perm = lu, perm
        return True

    def _factor_pivoting(self):
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from None
        self._perm = None
        self._check_pivots(np.abs(self._lu.U.diagonal()))
        self.method = "pivoting"

    def _apply(self, rhs):
        if self.dense:
            return sla.lu_solve(self._lu, rhs)
        if self._perm is None:
            return self._lu.solve(rhs)
        x = np.empty_like(rhs)
        x[self._perm] = self._lu.solve(rhs[self._perm])
        return x

    def _refine(self, rhs):
        x = self._apply(rhs)
        target = REFINEMENT_TOL * max(1.0, np.abs(rhs).max())
        res = np.abs(rhs - self.matrix @ x).max()
        for step in range(MAX_REFINEMENT):
            if res <= target:
                break
            dx = self._apply(rhs - self.matrix @ x)
            new = np.abs(rhs - self.matrix @ (x + dx)).max()
            if not np.isfinite(new) or new > 0.5 * res:
                if new < res:
                    x, res = x + dx, new
                break
            x, res = x + dx, new
            self.refinement_steps = max(self.refinement_steps, step + 1)
        return x, res

    def _krylov(self, rhs, x0):
        n = self.matrix.shape[0]
        precond = spla.LinearOperator((n, n), matvec=self._apply, dtype=float)
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            return np.zeros_like(rhs), 0.0
        x, _ = spla.gmres(self.matrix, rhs, x0=x0, M=precond, rtol=0.0, atol=REFINEMENT_TOL * bnorm,
                          restart=KRYLOV_RESTART, maxiter=KRYLOV_MAXITER)
        return x, np.abs(rhs - self.matrix @ x).max()

    def solve(self, rhs, check: bool = True) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self.method == "regularized":
            target = min(ACCEPT_TOL, self.residual_tol) * max(1.0, np.abs(rhs).max())
            x, res = self._refine(rhs)
            if not np.isfinite(res) or res > target:
                x, res = self._krylov(rhs, x if np.all(np.isfinite(x)) else None)
                self.krylov_solves += 1
            if not np.isfinite(res) or res > target:
                self._factor_pivoting()
                x, _ = self._refine(rhs)
        else:
            x, _ = self._refine(rhs)
        if check:
            res = np.abs(self.matrix @ x - rhs).max()
            scale = max(1.0, np.abs(rhs).max())
            if not np.isfinite(res) or res > self.residual_tol * scale:
                raise ResidualTooLarge(f"residual {res:.3e} exceeds {self.residual_tol:.1e} * {scale:.3e}")
        return x


def factor(matrix) -> Factorization:
    return Factorization(matrix)


def direct_solve(matrix, rhs) -> np.ndarray:
    """Solve ``matrix @ x = rhs`` by LU; raises on singularity or large residual."""
    return Factorization(matrix).solve(rhs)


@dataclass
class LinearSystem:
    """Square bordered system ``matrix @ [u, p, lambda] = rhs``."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_velocity: int
    n_pressure: int
    n_constraints: int
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SaddleSolution:
    velocity: np.ndarray
    pressure: np.ndarray
    multipliers: np.ndarray


def _grouped_border(W: sp.csr_matrix):
    """Sparse equivalent of a dense ``[[0, W], [W^T, 0]]`` border.

    Each constraint column is cut into groups of about ``sqrt(n)`` entries.
    Group ``j`` gets a copy ``mu_j`` of the multiplier and a partial sum
    ``sigma_j`` of the weighted pressures:

        mu_j - lambda = 0,  sigma_j - sum_{l in j} w_l p_l = 0,  sum_j sigma_j = 0.

    Returns the pressure-to-``mu`` coupling, the constraint owning each group
    and the number of groups.
    """
    W = sp.csc_matrix(W)
    npr, nl = W.shape
    wp_rows, wp_cols, wp_vals = [], [], []
    groups = []  # (constraint index, entry rows, entry weights)
    for c in range(nl):
        rows = W.indices[W.indptr[c]:W.indptr[c + 1]]
        vals = W.data[W.indptr[c]:W.indptr[c + 1]]
        size = max(1, int(np.ceil(np.sqrt(len(rows)))))
        for start in range(0, len(rows), size):
            groups.append((c, rows[start:start + size], vals[start:start + size]))
    ng = len(groups)
    for j, (_, rows, vals) in enumerate(groups):
        wp_rows.append(rows)
        wp_cols.append(np.full(len(rows), j))
        wp_vals.append(vals)
    cat = np.concatenate
    Wmu = compress(cat(wp_rows), cat(wp_cols), cat(wp_vals), (npr, ng))
    owner = np.array([g[0] for g in groups], dtype=np.int64)
    return Wmu, owner, ng


def bordered_saddle(velocity, coupling, divergence, rhs_velocity, constraints,
                    rhs_pressure=None, sparse_border: bool = True) -> LinearSystem:
    """Assemble ``[[A, B, 0], [C, 0, W], [0, W^T, 0]]``.

    ``A`` acts on velocity, ``B`` couples pressure into momentum, ``C`` gives
    the mass-conservation rows and the columns of ``W`` are the weights of
    the zero-mean constraints, one per pressure sub-block.  With
    ``sparse_border`` the dense border is replaced by the equivalent grouped
    form of :func:`_grouped_border`, which keeps LU fill-in low; the solution
    components ``(u, p, lambda)`` are identical.
    """
    A = sp.csr_matrix(velocity)
    B = sp.csr_matrix(coupling)
    C = sp.csr_matrix(divergence)
    if sp.issparse(constraints):
        W = sp.csr_matrix(constraints)
    else:
        W = np.asarray(constraints, dtype=float)
        W = sp.csr_matrix(W[:, None] if W.ndim == 1 else W)
    nu, npr = B.shape
    if A.shape != (nu, nu) or C.shape != (npr, nu) or W.shape[0] != npr:
        raise ValueError(f"inconsistent block shapes A{A.shape} B{B.shape} C{C.shape} W{W.shape}")
    nl = W.shape[1]
    if sparse_border:
        Wmu, owner, ng = _grouped_border(W)
        eye = sp.identity(ng, format="csr")
        lam_copy = compress(np.arange(ng), owner, -np.ones(ng), (ng, nl))
        sum_rows = compress(owner, np.arange(ng), np.ones(ng), (nl, ng))
        # unknowns: u, p, lambda, mu, sigma
        mat = sp.bmat([
            [A, B, None, None, None],
            [C, None, None, Wmu, None],
            [None, None, None, None, sum_rows],
            [None, None, lam_copy, eye, None],
            [None, -Wmu.T, None, None, eye],
        ], format="csr")
        extra = 2 * ng
    else:
        mat = sp.bmat([[A, B, None], [C, None, W], [None, W.T, None]], format="csr")
        extra = 0
    rhs = np.zeros(mat.shape[0])
    rhs[:nu] = rhs_velocity
    if rhs_pressure is not None:
        rhs[nu:nu + npr] = rhs_pressure
    return LinearSystem(mat, rhs, nu, npr, nl, {"auxiliary": extra})


def split_solution(system: LinearSystem, x: np.ndarray) -> SaddleSolution:
    """Split ``(u, p, lambda)`` and apply the inf-sup heuristic."""
    nu, npr, nl = system.n_velocity, system.n_pressure, system.n_constraints
    sol = SaddleSolution(x[:nu], x[nu:nu + npr], x[nu + npr:nu + npr + nl])
    scale = max(np.abs(system.rhs).max(), np.finfo(float).tiny)
    if sol.multipliers.size and np.abs(sol.multipliers).max() > INF_SUP_RATIO * scale:
        raise InfSupFailure(
            f"constraint multiplier {np.abs(sol.multipliers).max():.3e} exceeds {INF_SUP_RATIO:.0e} times "
            "the right-hand side; the pressure space is likely unstable on this mesh")
    return sol


def solve_system(system: LinearSystem, factorization: Factorization | None = None) -> SaddleSolution:
    """Solve a bordered system, optionally with a factorization of its matrix."""
    lu = Factorization(system.matrix) if factorization is None else factorization
    return split_solution(system, lu.solve(system.rhs))


def solve_saddle(velocity, coupling, divergence, rhs_velocity, constraints,
                 rhs_pressure=None) -> SaddleSolution:
    """Monolithic solve of a saddle-point system with zero-mean bordering."""
    return solve_system(bordered_saddle(velocity, coupling, divergence, rhs_velocity,
                                        constraints, rhs_pressure))
