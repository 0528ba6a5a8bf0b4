"""Dense two-phase revised simplex.

Solves min c.x subject to rows a.x {<=, >=, =} b with each variable either free
or nonnegative. Free variables are split into positive and negative parts,
rows are scaled to unit max-abs coefficient, and phase one minimises the sum
of artificial variables from an identity starting basis.

The basis inverse is an eta file over a periodically refactored inverse.
Pricing is either Dantzig's rule over rotating blocks of columns, which hands
over to Bland's rule after a run of degenerate pivots, or Bland's rule alone.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.errors import SolverError

logger = logging.getLogger('bandsel.lpcore')

PIVOT_TOL = 1e-9
FEASIBILITY_TOL = 1e-7
OPTIMALITY_TOL = 1e-9
DEGENERATE_TOL = 1e-12
REFACTOR_EVERY = 100
DEGENERATE_LIMIT = 50
PRICING_SEGMENTS = 8
MIN_SEGMENT = 64


class Relation(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class Bound(str, Enum):
    FREE = "free"
    NONNEG = "nonneg"


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class PricingRule(str, Enum):
    DANTZIG = "dantzig"
    BLAND = "bland"


@dataclass
class LinearProgram:
    objective: np.ndarray
    matrix: np.ndarray
    relations: List[Relation]
    rhs: np.ndarray
    bounds: List[Bound]
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64).reshape(-1)
        n = self.objective.shape[0]
        self.matrix = np.asarray(self.matrix, dtype=np.float64).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=np.float64).reshape(-1)
        self.relations = [Relation(r) for r in self.relations]
        self.bounds = [Bound(b) for b in self.bounds]
        if len(self.bounds) != n:
            raise ValueError(f"{len(self.bounds)} variable bounds for {n} variables")
        if self.matrix.shape[0] != self.rhs.shape[0] or len(self.relations) != self.rhs.shape[0]:
            raise ValueError("constraint matrix, relations and rhs disagree on the number of rows")
        if not np.all(np.isfinite(self.rhs)) or not np.all(np.isfinite(self.matrix)):
            raise ValueError("constraint data must be finite")

    @classmethod
    def with_variables(cls, objective: Sequence[float], bounds: Sequence[Bound], names: Optional[List[str]] = None) -> "LinearProgram":
        n = len(objective)
        return cls(objective=objective, matrix=np.zeros((0, n)), relations=[], rhs=np.zeros(0), bounds=list(bounds), names=names)

    @property
    def n_variables(self) -> int:
        return self.objective.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.rhs.shape[0]

    def add_constraint(self, coefficients: Sequence[float], relation: Relation, rhs: float) -> "LinearProgram":
        row = np.asarray(coefficients, dtype=np.float64).reshape(1, -1)
        if row.shape[1] != self.n_variables:
            raise ValueError(f"constraint has {row.shape[1]} coefficients, program has {self.n_variables} variables")
        if not np.isfinite(rhs):
            raise ValueError("rhs must be finite")
        self.matrix = np.vstack([self.matrix, row])
        self.relations.append(Relation(relation))
        self.rhs = np.append(self.rhs, float(rhs))
        return self

    def violations(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation on max-abs normalized rows; zero when the row holds."""
        scale = np.abs(self.matrix).max(axis=1, initial=0.0)
        scale[scale == 0] = 1.0
        gap = (self.matrix @ x - self.rhs) / scale
        out = np.zeros_like(gap)
        for i, relation in enumerate(self.relations):
            if relation is Relation.LE:
                out[i] = max(gap[i], 0.0)
            elif relation is Relation.GE:
                out[i] = max(-gap[i], 0.0)
            else:
                out[i] = abs(gap[i])
        return out


@dataclass
class LpSolution:
    status: LpStatus
    values: Optional[np.ndarray] = None
    objective_value: float = float('nan')
    iterations: int = 0
    basis: Optional[np.ndarray] = None  # standard-form columns, reusable by solve() on the same constraints

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _EtaFile:
    """Basis inverse as a refactored inverse followed by one eta column per pivot since."""

    def __init__(self, inverse: np.ndarray):
        self.inverse = inverse
        self.etas: List[Tuple[int, np.ndarray]] = []

    @classmethod
    def factor(cls, A: np.ndarray, basis: np.ndarray) -> "_EtaFile":
        if basis.size == 0:
            return cls(np.zeros((0, 0)))
        return cls(np.linalg.inv(A[:, basis]))

    def push(self, r: int, d: np.ndarray):
        self.etas.append((r, d))

    def ftran(self, a: np.ndarray) -> np.ndarray:
        """B^-1 a."""
        v = self.inverse @ a
        for r, d in self.etas:
            vr = v[r] / d[r]
            v -= vr * d
            v[r] = vr
        return v

    def btran(self, u: np.ndarray) -> np.ndarray:
        """u B^-1."""
        u = np.array(u, dtype=np.float64)
        for r, d in reversed(self.etas):
            u[r] -= (u @ d - u[r]) / d[r]
        return u @ self.inverse


@dataclass
class _StandardForm:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    artificial: np.ndarray  # bool mask over columns
    plus_col: np.ndarray
    minus_col: np.ndarray
    basis: np.ndarray = field(default=None)
    factor: _EtaFile = field(default=None)
    x_B: np.ndarray = field(default=None)
    in_basis: np.ndarray = field(default=None)
    iterations: int = 0
    bland_switches: int = 0
    price_start: int = 0

    def install(self, basis: np.ndarray, factor: _EtaFile, x_B: np.ndarray):
        self.basis = basis
        self.factor = factor
        self.x_B = x_B
        self.in_basis = np.zeros(self.A.shape[1], dtype=bool)
        self.in_basis[basis] = True


def _standard_form(lp: LinearProgram) -> _StandardForm:
    n = lp.n_variables
    plus_col = np.arange(n)
    minus_col = np.full(n, -1)
    extra = n
    for j, bound in enumerate(lp.bounds):
        if bound is Bound.FREE:
            minus_col[j] = extra
            extra += 1
    m = lp.n_constraints

    A = np.zeros((m, extra))
    A[:, :n] = lp.matrix
    for j in np.flatnonzero(minus_col >= 0):
        A[:, minus_col[j]] = -lp.matrix[:, j]
    b = lp.rhs.copy()

    scale = np.abs(A).max(axis=1, initial=0.0)
    scale[scale == 0] = 1.0
    A /= scale[:, None]
    b /= scale

    relations = list(lp.relations)
    for i in range(m):
        # b >= 0, and a homogeneous >= row becomes <= so its slack can start basic
        if b[i] < 0 or (b[i] == 0 and relations[i] is Relation.GE):
            A[i] = -A[i]
            b[i] = -b[i]
            if relations[i] is Relation.LE:
                relations[i] = Relation.GE
            elif relations[i] is Relation.GE:
                relations[i] = Relation.LE

    n_slack = sum(1 for r in relations if r is not Relation.EQ)
    n_art = sum(1 for r in relations if r is not Relation.LE)
    total = extra + n_slack + n_art
    A_std = np.zeros((m, total))
    A_std[:, :extra] = A
    artificial = np.zeros(total, dtype=bool)
    basis = np.empty(m, dtype=np.int64)
    slack = extra
    art = extra + n_slack
    for i, relation in enumerate(relations):
        if relation is Relation.LE:
            A_std[i, slack] = 1.0
            basis[i] = slack
            slack += 1
        elif relation is Relation.GE:
            A_std[i, slack] = -1.0
            slack += 1
            A_std[i, art] = 1.0
            artificial[art] = True
            basis[i] = art
            art += 1
        else:
            A_std[i, art] = 1.0
            artificial[art] = True
            basis[i] = art
            art += 1

    c = np.zeros(total)
    c[:n] = lp.objective
    for j in np.flatnonzero(minus_col >= 0):
        c[minus_col[j]] = -lp.objective[j]

    form = _StandardForm(A=A_std, b=b, c=c, artificial=artificial, plus_col=plus_col, minus_col=minus_col)
    form.install(basis, _EtaFile(np.eye(m)), b.copy())
    return form


def _pivot(form: _StandardForm, r: int, q: int, d: np.ndarray):
    theta = max(form.x_B[r], 0.0) / d[r]
    form.x_B = form.x_B - theta * d
    form.x_B[r] = theta
    form.factor.push(r, d)
    form.in_basis[form.basis[r]] = False
    form.in_basis[q] = True
    form.basis[r] = q


def _refactor(form: _StandardForm):
    if form.basis.size == 0:
        return
    form.factor = _EtaFile.factor(form.A, form.basis)
    form.x_B = form.factor.ftran(form.b)


def _segments(total: int) -> List[np.ndarray]:
    count = max(1, min(PRICING_SEGMENTS, total // MIN_SEGMENT))
    return np.array_split(np.arange(total), count)


def _price_bland(form: _StandardForm, y: np.ndarray, cost: np.ndarray, eligible: np.ndarray,
                 segments: List[np.ndarray]) -> Optional[int]:
    """Lowest-index column with a negative reduced cost."""
    for segment in segments:
        cols = segment[eligible[segment]]
        if cols.size == 0:
            continue
        reduced = cost[cols] - y @ form.A[:, cols]
        improving = np.flatnonzero(reduced < -OPTIMALITY_TOL)
        if improving.size:
            return int(cols[improving[0]])
    return None


def _price_dantzig(form: _StandardForm, y: np.ndarray, cost: np.ndarray, eligible: np.ndarray,
                   segments: List[np.ndarray]) -> Optional[int]:
    """Most negative reduced cost within the first segment, from the last one used, that has any."""
    for step in range(len(segments)):
        s = (form.price_start + step) % len(segments)
        cols = segments[s][eligible[segments[s]]]
        if cols.size == 0:
            continue
        reduced = cost[cols] - y @ form.A[:, cols]
        best = int(np.argmin(reduced))
        if reduced[best] < -OPTIMALITY_TOL:
            form.price_start = s
            return int(cols[best])
    return None


def _run_simplex(form: _StandardForm, cost: np.ndarray, allowed: np.ndarray, max_iterations: int,
                 pricing: PricingRule) -> LpStatus:
    A = form.A
    m = form.basis.shape[0]
    refactor_every = max(REFACTOR_EVERY, m // 8)
    segments = _segments(A.shape[1])
    degenerate_run = 0
    while True:
        if len(form.factor.etas) >= refactor_every:
            _refactor(form)
        if form.iterations >= max_iterations:
            raise SolverError(f"simplex did not terminate within {max_iterations} iterations")

        bland = pricing is PricingRule.BLAND or degenerate_run >= DEGENERATE_LIMIT
        if degenerate_run == DEGENERATE_LIMIT and pricing is PricingRule.DANTZIG:
            form.bland_switches += 1
        y = form.factor.btran(cost[form.basis])
        eligible = allowed & ~form.in_basis
        price = _price_bland if bland else _price_dantzig
        q = price(form, y, cost, eligible, segments)
        if q is None:
            return LpStatus.OPTIMAL

        d = form.factor.ftran(A[:, q])
        positive = d > PIVOT_TOL
        if not positive.any():
            return LpStatus.UNBOUNDED
        ratios = np.full(d.shape[0], np.inf)
        ratios[positive] = np.maximum(form.x_B[positive], 0.0) / d[positive]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12)
        if bland:
            r = int(ties[np.argmin(form.basis[ties])])
        else:
            r = int(ties[np.argmax(d[ties])])

        _pivot(form, r, q, d)
        form.iterations += 1
        degenerate_run = degenerate_run + 1 if theta <= DEGENERATE_TOL else 0


def _drive_out_artificials(form: _StandardForm):
    """After phase one, pivot zero-valued artificials out of the basis where a real column allows it."""
    real = np.flatnonzero(~form.artificial)
    m = form.basis.shape[0]
    for r in range(m):
        if not form.artificial[form.basis[r]]:
            continue
        unit = np.zeros(m)
        unit[r] = 1.0
        row = form.factor.btran(unit) @ form.A[:, real]
        usable = np.flatnonzero((np.abs(row) > PIVOT_TOL) & ~form.in_basis[real])
        if usable.size == 0:
            # redundant row; the artificial stays basic at zero
            continue
        q = int(real[usable[0]])
        d = form.factor.ftran(form.A[:, q])
        form.x_B[r] = 0.0
        _pivot(form, r, q, d)


def _warm_start(form: _StandardForm, basis: np.ndarray) -> bool:
    """Install a basis from an earlier solve when it is still primal feasible."""
    m, total = form.A.shape
    basis = np.asarray(basis, dtype=np.int64).copy()
    if basis.shape != (m,) or (m and (basis.min() < 0 or basis.max() >= total)) or np.unique(basis).size != m:
        logger.debug("Warm-start basis does not fit this program; starting cold")
        return False
    try:
        factor = _EtaFile.factor(form.A, basis)
    except np.linalg.LinAlgError:
        logger.debug("Warm-start basis is singular; starting cold")
        return False
    x_B = factor.ftran(form.b)
    if not np.all(np.isfinite(x_B)) or (m and x_B.min() < -FEASIBILITY_TOL) \
            or np.any(form.artificial[basis] & (x_B > FEASIBILITY_TOL)):
        logger.debug("Warm-start basis is not primal feasible; starting cold")
        return False
    form.install(basis, factor, x_B)
    return True


def solve(lp: LinearProgram, max_iterations: Optional[int] = None, pricing: PricingRule = PricingRule.DANTZIG,
          basis: Optional[np.ndarray] = None) -> LpSolution:
    """Two-phase revised simplex; Infeasible and Unbounded come back as statuses, never exceptions.

    ``basis`` takes the ``basis`` of an earlier solution of a program with the same constraints. When it
    is still feasible, phase one is skipped; only the objective may differ between the two programs.
    """
    form = _standard_form(lp)
    m, total = form.A.shape
    pricing = PricingRule(pricing)
    if max_iterations is None:
        max_iterations = 50 * (m + total) + 1000

    if basis is not None and _warm_start(form, basis):
        _drive_out_artificials(form)
    elif form.artificial.any():
        phase_one_cost = form.artificial.astype(np.float64)
        _run_simplex(form, phase_one_cost, np.ones(total, dtype=bool), max_iterations, pricing)
        _refactor(form)
        infeasibility = float(phase_one_cost[form.basis] @ np.maximum(form.x_B, 0.0))
        if infeasibility > FEASIBILITY_TOL:
            logger.debug(f"Phase one ended with infeasibility {infeasibility:.3g} after {form.iterations} iterations")
            return LpSolution(status=LpStatus.INFEASIBLE, iterations=form.iterations)
        _drive_out_artificials(form)

    status = _run_simplex(form, form.c, ~form.artificial, max_iterations, pricing)
    if status is LpStatus.UNBOUNDED:
        return LpSolution(status=status, iterations=form.iterations)

    _refactor(form)
    x_std = np.zeros(total)
    x_std[form.basis] = np.maximum(form.x_B, 0.0)
    values = x_std[form.plus_col].copy()
    free = form.minus_col >= 0
    values[free] -= x_std[form.minus_col[free]]
    objective_value = float(lp.objective @ values)
    logger.debug(f"LP {m}x{total} solved in {form.iterations} iterations ({pricing.value}, "
                 f"{form.bland_switches} degenerate hand-overs), objective {objective_value:.10g}")
    return LpSolution(status=LpStatus.OPTIMAL, values=values, objective_value=objective_value,
                      iterations=form.iterations, basis=form.basis.copy())


# --- Debug dump ---
def format_lp(lp: LinearProgram) -> str:
    """Fixed-column text rendering: one line per variable, then one line per constraint."""
    names = lp.names or [f"x{j + 1}" for j in range(lp.n_variables)]
    lines = [f"LP {lp.n_constraints:>8} rows {lp.n_variables:>8} cols", "VARIABLES"]
    for j, (name, bound, cost) in enumerate(zip(names, lp.bounds, lp.objective)):
        lines.append(f"{j + 1:>8} {name:<16} {bound.value:<8} {cost:>16.8g}")
    lines.append("CONSTRAINTS")
    for i in range(lp.n_constraints):
        nz = np.flatnonzero(lp.matrix[i])
        terms = " ".join(f"{j + 1:>6}:{lp.matrix[i, j]:<14.8g}" for j in nz)
        lines.append(f"{i + 1:>8} {lp.relations[i].value:>2} {lp.rhs[i]:>16.8g} | {terms}")
    return "\n".join(lines) + "\n"


def dump_lp(lp: LinearProgram, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(format_lp(lp))
    logger.info(f"Dumped LP ({lp.n_constraints} rows, {lp.n_variables} cols) to {path}")
