"""Conic programs over PSD, second-order, exponential and linear cones.

Problems are collected as named variable blocks (free vectors, real
symmetric PSD matrices, complex Hermitian PSD matrices) plus affine
constraints, then lowered to Clarabel's sparse `min q'x  s.t.  Ax + s = b,
s in K` form. Complex Hermitian blocks are embedded into real symmetric
blocks at this boundary; everything above it works with complex matrices.

Lowering conventions:
  * PSD blocks enter the solver variable as the scaled upper triangle,
    column major, off-diagonal entries multiplied by sqrt(2), so that
    svec(A) . svec(B) = tr(A B).
  * A Hermitian n x n block becomes the unstructured real symmetric
    2n x 2n variable Y; the complex value is recovered afterwards as
    X = (Y11 + Y22)/2 + i (Y21 - Y12)/2. Any feasible Y yields a
    Hermitian PSD X with identical affine values, so no structure
    constraints are needed. tr(C X) lowers to svec(embed(C)/2) . svec(Y).
  * Exponential cone triples follow (x, y, z) with y * exp(x/y) <= z, so
    t <= log(u) is (t, 1, u).
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

__all__ = [
    "ConicProblem",
    "ConicSolution",
    "LinExpr",
    "SolverSettings",
    "embed_hermitian",
    "extract_hermitian",
    "smat",
    "svec",
]

HERMITIAN_RTOL = 1e-12
SQRT2 = float(np.sqrt(2.0))


class ConicError(RuntimeError):
    """Problem construction or lowering failed."""


def embed_hermitian(x: np.ndarray) -> np.ndarray:
    """Real symmetric 2n x 2n embedding [[Re X, -Im X], [Im X, Re X]].

    The embedding is PSD exactly when X is, its eigenvalues are those of
    X doubled in multiplicity, and its trace is 2 tr(X). Quadratic forms
    carry over as v^H X v = vt' Xt vt with vt = [Re v; Im v].
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("embed_hermitian: expected a square matrix")
    x = x.astype(complex, copy=False)
    scale = max(1.0, float(np.abs(x).max()) if x.size else 0.0)
    if float(np.abs(x - x.conj().T).max()) > HERMITIAN_RTOL * scale:
        raise ValueError("embed_hermitian: input is not Hermitian within tolerance")
    re, im = x.real, x.imag
    return np.block([[re, -im], [im, re]])


def extract_hermitian(y: np.ndarray) -> np.ndarray:
    """Recover the complex matrix from a (possibly unstructured) embedding."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] != y.shape[1] or y.shape[0] % 2:
        raise ValueError("extract_hermitian: expected a square matrix of even size")
    n = y.shape[0] // 2
    re = 0.5 * (y[:n, :n] + y[n:, n:])
    im = 0.5 * (y[n:, :n] - y[:n, n:])
    x = re + 1j * im
    return 0.5 * (x + x.conj().T)


def _triangle_count(n: int) -> int:
    return n * (n + 1) // 2


def svec(mat: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization, column major, sqrt(2) off-diag."""
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    out = np.empty(_triangle_count(n))
    pos = 0
    for j in range(n):
        out[pos : pos + j] = SQRT2 * mat[:j, j]
        out[pos + j] = mat[j, j]
        pos += j + 1
    return out


def smat(vec: np.ndarray, n: int) -> np.ndarray:
    """Inverse of svec."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (_triangle_count(n),):
        raise ValueError("smat: wrong vector length")
    out = np.zeros((n, n))
    pos = 0
    for j in range(n):
        out[:j, j] = vec[pos : pos + j] / SQRT2
        out[j, :j] = out[:j, j]
        out[j, j] = vec[pos + j]
        pos += j + 1
    return out


_FREE, _PSD, _HERM = "free", "psd", "herm"


@dataclass(frozen=True)
class _Block:
    name: str
    kind: str
    dim: int

    @property
    def size(self) -> int:
        if self.kind == _FREE:
            return self.dim
        if self.kind == _PSD:
            return _triangle_count(self.dim)
        return _triangle_count(2 * self.dim)


class LinExpr:
    """Affine expression over the problem's variable blocks.

    Matrix block coefficients C stand for tr(C X); free block
    coefficients c stand for c . x. Supports +, -, and scalar *.
    """

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict | None = None, const: float = 0.0):
        self.coeffs = coeffs or {}
        self.const = float(const)

    @staticmethod
    def constant(value: float) -> "LinExpr":
        return LinExpr({}, value)

    def copy(self) -> "LinExpr":
        return LinExpr({k: v.copy() for k, v in self.coeffs.items()}, self.const)

    def __add__(self, other):
        if not isinstance(other, LinExpr):
            return LinExpr(dict(self.coeffs), self.const + float(other))
        out = {k: v.copy() for k, v in self.coeffs.items()}
        for k, v in other.coeffs.items():
            out[k] = out[k] + v if k in out else v.copy()
        return LinExpr(out, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.coeffs.items()}, -self.const)

    def __sub__(self, other):
        if not isinstance(other, LinExpr):
            return LinExpr(dict(self.coeffs), self.const - float(other))
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return LinExpr({k: scalar * v for k, v in self.coeffs.items()}, scalar * self.const)

    __rmul__ = __mul__


def as_expr(value) -> LinExpr:
    if isinstance(value, LinExpr):
        return value
    return LinExpr.constant(float(value))


@dataclass
class ConicSolution:
    """Solver outcome in the caller's terms.

    status is one of optimal, infeasible, unbounded, numerical-failure.
    blocks maps block names to values (complex matrices for Hermitian
    blocks). objective follows the problem's sense and includes constant
    terms; it is None unless status is optimal.
    """

    status: str
    objective: float | None
    blocks: dict
    iterations: int
    runtime: float
    duality_gap: float | None = None
    max_residual: float | None = None
    solver_status: str = ""

    def value(self, expr: LinExpr) -> float:
        total = expr.const
        for name, coeff in expr.coeffs.items():
            block_value = self.blocks[name]
            if coeff.ndim == 1:
                total += float(coeff @ block_value)
            else:
                total += float(np.real(np.trace(np.asarray(coeff).conj().T @ block_value)))
        return total


@dataclass(frozen=True)
class SolverSettings:
    """Interior-point settings passed to Clarabel."""

    tol_feas: float = 1e-8
    tol_gap_abs: float = 1e-8
    tol_gap_rel: float = 1e-8
    max_iter: int = 200
    verbose: bool = False

    def tightened(self) -> "SolverSettings":
        """Settings for one retry after a numerical failure."""
        return dataclasses.replace(self, max_iter=5 * self.max_iter, tol_gap_abs=1e-7, tol_gap_rel=1e-7)


class ConicProblem:
    """Conic program assembled from named blocks and affine constraints."""

    def __init__(self, maximize: bool = True):
        self.maximize = bool(maximize)
        self._blocks: dict[str, _Block] = {}
        self._eqs: list[LinExpr] = []
        self._ineqs: list[LinExpr] = []
        self._socs: list[list[LinExpr]] = []
        self._exps: list[tuple[LinExpr, LinExpr, LinExpr]] = []
        self._objective: LinExpr = LinExpr.constant(0.0)

    # -- variable blocks ------------------------------------------------

    def _add_block(self, name: str, kind: str, dim: int) -> str:
        if name in self._blocks:
            raise ConicError(f"duplicate block name {name!r}")
        if dim < 1:
            raise ConicError("block dimension must be >= 1")
        self._blocks[name] = _Block(name, kind, int(dim))
        return name

    def free(self, name: str, dim: int) -> str:
        """Unconstrained real vector block."""
        return self._add_block(name, _FREE, dim)

    def psd(self, name: str, n: int) -> str:
        """Real symmetric PSD matrix block."""
        return self._add_block(name, _PSD, n)

    def hermitian_psd(self, name: str, n: int) -> str:
        """Complex Hermitian PSD matrix block."""
        return self._add_block(name, _HERM, n)

    # -- expressions -----------------------------------------------------

    def term(self, name: str, coeff) -> LinExpr:
        """tr(coeff @ X) for matrix blocks, coeff . x for free blocks."""
        block = self._blocks[name]
        if block.kind == _FREE:
            c = np.asarray(coeff, dtype=float).reshape(-1)
            if c.shape != (block.dim,):
                raise ConicError(f"coefficient for free block {name!r} has wrong length")
            return LinExpr({name: c})
        c = np.asarray(coeff)
        if c.shape != (block.dim, block.dim):
            raise ConicError(f"coefficient for block {name!r} has wrong shape")
        if block.kind == _PSD:
            c = np.asarray(c, dtype=float)
            c = 0.5 * (c + c.T)
        else:
            c = c.astype(complex)
            scale = max(1.0, float(np.abs(c).max()))
            if float(np.abs(c - c.conj().T).max()) > HERMITIAN_RTOL * scale:
                raise ConicError(f"coefficient for Hermitian block {name!r} is not Hermitian")
            c = 0.5 * (c + c.conj().T)
        return LinExpr({name: c})

    def entry(self, name: str, i: int) -> LinExpr:
        block = self._blocks[name]
        if block.kind != _FREE:
            raise ConicError("entry() applies to free blocks only")
        c = np.zeros(block.dim)
        c[int(i)] = 1.0
        return LinExpr({name: c})

    def trace(self, name: str) -> LinExpr:
        block = self._blocks[name]
        if block.kind == _FREE:
            raise ConicError("trace() applies to matrix blocks only")
        eye = np.eye(block.dim, dtype=complex if block.kind == _HERM else float)
        return self.term(name, eye)

    # -- constraints -----------------------------------------------------

    def add_eq(self, expr, rhs: float = 0.0) -> None:
        self._eqs.append(as_expr(expr) - float(rhs))

    def add_ge(self, expr, rhs: float = 0.0) -> None:
        self._ineqs.append(as_expr(expr) - float(rhs))

    def add_le(self, expr, rhs: float = 0.0) -> None:
        self._ineqs.append(float(rhs) - as_expr(expr))

    def add_soc(self, bound, parts) -> None:
        """||parts||_2 <= bound."""
        self._socs.append([as_expr(bound)] + [as_expr(p) for p in parts])

    def add_exp(self, x, y, z) -> None:
        """y * exp(x / y) <= z with y > 0."""
        self._exps.append((as_expr(x), as_expr(y), as_expr(z)))

    def add_log_hypograph(self, t, u) -> int:
        """t <= log(u); returns the index of the underlying exp cone."""
        self.add_exp(t, 1.0, u)
        return len(self._exps) - 1

    def set_objective(self, expr) -> None:
        self._objective = as_expr(expr)

    # -- lowering ---------------------------------------------------------

    def _offsets(self) -> tuple[dict, int]:
        offsets = {}
        total = 0
        for name, block in self._blocks.items():
            offsets[name] = total
            total += block.size
        return offsets, total

    def _expr_columns(self, expr: LinExpr, offsets: dict) -> tuple[np.ndarray, np.ndarray, float]:
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        for name, coeff in expr.coeffs.items():
            block = self._blocks[name]
            base = offsets[name]
            if block.kind == _FREE:
                vec = np.asarray(coeff, dtype=float)
            elif block.kind == _PSD:
                vec = svec(coeff)
            else:
                vec = svec(0.5 * embed_hermitian(coeff))
            nz = np.nonzero(vec)[0]
            cols.append(base + nz)
            vals.append(vec[nz])
        if cols:
            return np.concatenate(cols), np.concatenate(vals), expr.const
        return np.empty(0, dtype=int), np.empty(0), expr.const

    def solve(self, settings: SolverSettings | None = None, verify: bool = True) -> ConicSolution:
        """Lower to Clarabel, solve, and map the variable blocks back."""
        settings = settings or SolverSettings()
        offsets, num_cols = self._offsets()
        if num_cols == 0:
            raise ConicError("problem has no variables")

        rows_i: list[np.ndarray] = []
        cols_i: list[np.ndarray] = []
        vals_i: list[np.ndarray] = []
        b: list[float] = []
        cones: list = []
        row = 0

        def push(expr: LinExpr, negate: bool):
            # s = b - A x: "expr in cone" uses A = -a, b = const (negate=True);
            # "expr == 0" uses A = +a, b = -const so the slack itself is zero
            nonlocal row
            cols, vals, const = self._expr_columns(expr, offsets)
            rows_i.append(np.full(cols.shape[0], row, dtype=int))
            cols_i.append(cols)
            vals_i.append(-vals if negate else vals)
            b.append(const if negate else -const)
            row += 1

        for expr in self._eqs:
            push(expr, negate=False)
        if self._eqs:
            cones.append(clarabel.ZeroConeT(len(self._eqs)))
        for expr in self._ineqs:
            push(expr, negate=True)
        if self._ineqs:
            cones.append(clarabel.NonnegativeConeT(len(self._ineqs)))
        for soc in self._socs:
            for part in soc:
                push(part, negate=True)
            cones.append(clarabel.SecondOrderConeT(len(soc)))
        for triple in self._exps:
            for part in triple:
                push(part, negate=True)
            cones.append(clarabel.ExponentialConeT())
        psd_blocks = [blk for blk in self._blocks.values() if blk.kind in (_PSD, _HERM)]
        for blk in psd_blocks:
            side = blk.dim if blk.kind == _PSD else 2 * blk.dim
            base = offsets[blk.name]
            idx = np.arange(blk.size)
            rows_i.append(row + idx)
            cols_i.append(base + idx)
            vals_i.append(np.full(blk.size, -1.0))
            b.extend([0.0] * blk.size)
            row += blk.size
            cones.append(clarabel.PSDTriangleConeT(side))

        a_mat = sparse.csc_matrix(
            (np.concatenate(vals_i), (np.concatenate(rows_i), np.concatenate(cols_i))),
            shape=(row, num_cols),
        )
        b_vec = np.asarray(b)

        obj_cols, obj_vals, obj_const = self._expr_columns(self._objective, offsets)
        q = np.zeros(num_cols)
        q[obj_cols] = -obj_vals if self.maximize else obj_vals
        p_mat = sparse.csc_matrix((num_cols, num_cols))

        cl_settings = clarabel.DefaultSettings()
        cl_settings.verbose = settings.verbose
        cl_settings.max_iter = settings.max_iter
        cl_settings.tol_feas = settings.tol_feas
        cl_settings.tol_gap_abs = settings.tol_gap_abs
        cl_settings.tol_gap_rel = settings.tol_gap_rel
        cl_settings.max_threads = 1

        start = time.perf_counter()
        solver = clarabel.DefaultSolver(p_mat, q, a_mat, b_vec, cones, cl_settings)
        result = solver.solve()
        runtime = time.perf_counter() - start

        raw_status = str(result.status)
        status = {
            "Solved": "optimal",
            "AlmostSolved": "optimal",
            "PrimalInfeasible": "infeasible",
            "AlmostPrimalInfeasible": "infeasible",
            "DualInfeasible": "unbounded",
            "AlmostDualInfeasible": "unbounded",
        }.get(raw_status, "numerical-failure")

        blocks: dict[str, np.ndarray] = {}
        objective = None
        gap = None
        max_residual = None
        if status == "optimal":
            x = np.asarray(result.x)
            for name, block in self._blocks.items():
                base = offsets[name]
                chunk = x[base : base + block.size]
                if block.kind == _FREE:
                    blocks[name] = chunk.copy()
                elif block.kind == _PSD:
                    blocks[name] = smat(chunk, block.dim)
                else:
                    blocks[name] = extract_hermitian(smat(chunk, 2 * block.dim))
            objective = float(obj_vals @ x[obj_cols] + obj_const) if obj_cols.size else obj_const
            gap = abs(float(result.obj_val) - float(result.obj_val_dual))
            if verify:
                s = np.asarray(result.s)
                resid = a_mat @ x + s - b_vec
                max_residual = float(np.abs(resid).max()) if resid.size else 0.0
                scale = 1.0 + (float(np.abs(b_vec).max()) if b_vec.size else 0.0)
                # near-tolerance exits are fine when the returned point is
                # still accurate; a genuine stall is not
                clean = max_residual <= 1e-6 * scale
                if gap > 1e-5 * max(1.0, abs(float(result.obj_val))):
                    clean = False
                for name, block in self._blocks.items():
                    if block.kind == _FREE:
                        continue
                    mat = blocks[name]
                    tr = float(np.real(np.trace(mat)))
                    mineig = float(np.linalg.eigvalsh(mat)[0])
                    if mineig < -1e-7 * max(1.0, tr):
                        clean = False
                if not clean and raw_status != "Solved":
                    status = "numerical-failure"
                    objective = None
                    blocks = {}

        return ConicSolution(
            status=status,
            objective=objective,
            blocks=blocks,
            iterations=int(result.iterations),
            runtime=runtime,
            duality_gap=gap,
            max_residual=max_residual,
            solver_status=raw_status,
        )

    # -- debugging --------------------------------------------------------

    def dump(self, path) -> None:
        """Write the lowered problem as sparse text for external inspection."""
        offsets, num_cols = self._offsets()
        lines = ["conic-problem v1", f"sense {'maximize' if self.maximize else 'minimize'}"]
        lines.append(f"columns {num_cols}")
        for name, block in self._blocks.items():
            lines.append(f"block {name} {block.kind} {block.dim} offset {offsets[name]} size {block.size}")
        obj_cols, obj_vals, obj_const = self._expr_columns(self._objective, offsets)
        lines.append(f"objective const {obj_const!r} nnz {obj_cols.size}")
        for c, v in zip(obj_cols, obj_vals):
            lines.append(f"obj {c} {v!r}")
        groups = [
            ("eq", self._eqs),
            ("ge", self._ineqs),
        ]
        for label, exprs in groups:
            for expr in exprs:
                cols, vals, const = self._expr_columns(expr, offsets)
                entries = " ".join(f"{c}:{v!r}" for c, v in zip(cols, vals))
                lines.append(f"{label} const {const!r} {entries}")
        for soc in self._socs:
            lines.append(f"soc {len(soc)}")
            for expr in soc:
                cols, vals, const = self._expr_columns(expr, offsets)
                entries = " ".join(f"{c}:{v!r}" for c, v in zip(cols, vals))
                lines.append(f"  row const {const!r} {entries}")
        for triple in self._exps:
            lines.append("exp")
            for expr in triple:
                cols, vals, const = self._expr_columns(expr, offsets)
                entries = " ".join(f"{c}:{v!r}" for c, v in zip(cols, vals))
                lines.append(f"  row const {const!r} {entries}")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + "\n")
