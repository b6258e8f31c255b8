"""Standard-form SOCP data model: minimize c'u subject to
||A_i u||_2 <= b_i'u + d_i (second-order cones) and g_j'u <= r_j (linear
inequalities), plus KKT verification helpers and a plain-text dump/load
format for cross-checking against external solvers.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SecondOrderCone",
    "LinearInequality",
    "ConicProblem",
    "SolverConfig",
    "ConicStatus",
    "ConicSolution",
    "standard_form",
    "check_kkt",
    "constraint_violations",
    "dump_problem",
    "load_problem",
]


@dataclass(frozen=True)
class SecondOrderCone:
    """||A u||_2 <= b'u + d."""
    A: np.ndarray
    b: np.ndarray
    d: float


@dataclass(frozen=True)
class LinearInequality:
    """g'u <= r."""
    g: np.ndarray
    r: float


@dataclass(frozen=True)
class ConicProblem:
    n: int
    c: np.ndarray
    cones: tuple
    linear: tuple

    def __init__(self, n, c, cones=(), linear=()):
        c = np.ascontiguousarray(c, dtype=np.float64).ravel()
        if c.size != n:
            raise ValueError(f"objective length {c.size} != n = {n}")
        norm_cones = []
        for cone in cones:
            if not isinstance(cone, SecondOrderCone):
                cone = SecondOrderCone(*cone)
            A = np.ascontiguousarray(np.atleast_2d(cone.A), dtype=np.float64)
            b = np.ascontiguousarray(cone.b, dtype=np.float64).ravel()
            if A.shape[1] != n or b.size != n:
                raise ValueError("cone dimensions inconsistent with n")
            norm_cones.append(SecondOrderCone(A, b, float(cone.d)))
        norm_lin = []
        for ineq in linear:
            if not isinstance(ineq, LinearInequality):
                ineq = LinearInequality(*ineq)
            g = np.ascontiguousarray(ineq.g, dtype=np.float64).ravel()
            if g.size != n:
                raise ValueError("linear inequality dimension inconsistent with n")
            norm_lin.append(LinearInequality(g, float(ineq.r)))
        if not norm_cones and not norm_lin:
            raise ValueError("problem must have at least one constraint")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "cones", tuple(norm_cones))
        object.__setattr__(self, "linear", tuple(norm_lin))


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iterations: int = 200
    step_fraction: float = 0.99

    def __post_init__(self):
        if self.gap_tol <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.step_fraction < 1.0:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


class ConicStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class ConicSolution:
    u_opt: np.ndarray
    objective_value: float
    status: ConicStatus
    iterations: int
    duality_gap: float
    primal_residual: float
    dual_residual: float
    slack: np.ndarray = field(repr=False, default=None)
    dual: np.ndarray = field(repr=False, default=None)


def standard_form(problem):
    """Flatten to (G, h, l, dims, starts) with slack layout
    s = h - G u in {orthant of size l} x SOC(dims[0]) x ... :
    linear rows first, then per cone the row [-b'; -A] with h = [d; 0].
    """
    n = problem.n
    l = len(problem.linear)
    dims = np.array([cone.A.shape[0] + 1 for cone in problem.cones], dtype=np.int64)
    m = l + int(dims.sum())
    G = np.zeros((m, n))
    h = np.zeros(m)
    for j, ineq in enumerate(problem.linear):
        G[j] = ineq.g
        h[j] = ineq.r
    starts = np.empty(len(dims), dtype=np.int64)
    off = l
    for k, cone in enumerate(problem.cones):
        starts[k] = off
        G[off] = -cone.b
        h[off] = cone.d
        G[off + 1: off + dims[k]] = -cone.A
        off += dims[k]
    return G, h, l, dims, starts


def constraint_violations(problem, u):
    """Per-constraint violations at u, cones first then linear rows
    (0 where satisfied)."""
    u = np.asarray(u, dtype=np.float64).ravel()
    out = np.empty(len(problem.cones) + len(problem.linear))
    for k, cone in enumerate(problem.cones):
        out[k] = np.linalg.norm(cone.A @ u) - (cone.b @ u + cone.d)
    for j, ineq in enumerate(problem.linear):
        out[len(problem.cones) + j] = ineq.g @ u - ineq.r
    return np.maximum(out, 0.0)


def check_kkt(problem, solution):
    """Recompute (primal_residual, dual_residual, duality_gap) from the
    iterates with fresh arithmetic (same normalized definitions the solver
    terminates on):

        primal = ||G u + s - h|| / (1 + ||h||)
        dual   = ||c + G' z||   / (1 + ||c||)
        gap    = s'z / (1 + |c'u| + |h'z|)
    """
    if solution.slack is None or solution.dual is None:
        raise ValueError("solution does not carry primal and dual iterates")
    G, h, _, _, _ = standard_form(problem)
    u = np.asarray(solution.u_opt, dtype=np.float64)
    s = np.asarray(solution.slack, dtype=np.float64)
    z = np.asarray(solution.dual, dtype=np.float64)
    c = problem.c
    primal = np.linalg.norm(G @ u + s - h) / (1.0 + np.linalg.norm(h))
    dual = np.linalg.norm(c + G.T @ z) / (1.0 + np.linalg.norm(c))
    gap = float(s @ z) / (1.0 + abs(float(c @ u)) + abs(float(h @ z)))
    return float(primal), float(dual), float(gap)


# --- plain-text problem interchange -----------------------------------------
#
# Line-oriented decimal text, '#' comments ignored:
#   socp <n>
#   c <n values>
#   cone <rows> <d>         (repeated; then <rows> lines of A, then "b <n values>")
#   linear <r> <n values of g>
# Matrices are row-major, one row per line.

def dump_problem(problem, path):
    with open(path, "w") as f:
        f.write(f"socp {problem.n}\n")
        f.write("c " + _fmt(problem.c) + "\n")
        for cone in problem.cones:
            f.write(f"cone {cone.A.shape[0]} {cone.d!r}\n")
            for row in cone.A:
                f.write(_fmt(row) + "\n")
            f.write("b " + _fmt(cone.b) + "\n")
        for ineq in problem.linear:
            f.write(f"linear {ineq.r!r} " + _fmt(ineq.g) + "\n")


def load_problem(path):
    with open(path) as f:
        tokens = [ln.split() for ln in f if ln.strip() and not ln.lstrip().startswith("#")]
    if not tokens or tokens[0][0] != "socp":
        raise ValueError("not a conic problem file")
    n = int(tokens[0][1])
    if tokens[1][0] != "c":
        raise ValueError("missing objective line")
    c = np.array([float(v) for v in tokens[1][1:]])
    cones, linear = [], []
    i = 2
    while i < len(tokens):
        kind = tokens[i][0]
        if kind == "cone":
            rows, d = int(tokens[i][1]), float(tokens[i][2])
            A = np.array([[float(v) for v in tokens[i + 1 + r]] for r in range(rows)])
            A = A.reshape(rows, n)
            bline = tokens[i + 1 + rows]
            if bline[0] != "b":
                raise ValueError("cone block missing b line")
            b = np.array([float(v) for v in bline[1:]])
            cones.append(SecondOrderCone(A, b, d))
            i += rows + 2
        elif kind == "linear":
            r = float(tokens[i][1])
            g = np.array([float(v) for v in tokens[i][2:]])
            linear.append(LinearInequality(g, r))
            i += 1
        else:
            raise ValueError(f"unknown record {kind!r}")
    return ConicProblem(n, c, cones, linear)


def _fmt(arr):
    return " ".join(repr(float(v)) for v in arr)
