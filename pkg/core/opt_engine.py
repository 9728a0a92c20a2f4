#!/usr/bin/env python3
"""
小规模混合整数线性规划求解器

- LinearProgram：变量表、约束行与最小化目标，配合 LinExpr 以表达式方式建模
- solve_lp：稠密单纯形表上的两阶段单纯形法（退化时切换 Bland 规则防止循环）
- solve_mip：在 0-1 变量上做最优界优先的分支定界，支持热启动与节点/时间预算
- 可选 HiGHS 后端（scipy.optimize.milp）与 LP 文本导出
"""
from __future__ import annotations

import heapq
import math
import time
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from core.errors import ProgramError, SolverError
from core.logger import get_logger

logger = get_logger(__name__)

FEAS_TOL = 1e-6
INT_TOL = 1e-6
_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
_DEGENERATE_SWITCH = 50

LE, GE, EQ = "<=", ">=", "="
SENSES = (LE, GE, EQ)


class LinExpr:
    """线性表达式 Σ coef·var + const，变量以序号表示"""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | None = None, const: float = 0.0):
        self.terms: dict[int, float] = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> LinExpr:
        return cls({index: coef})

    def copy(self) -> LinExpr:
        return LinExpr(self.terms, self.const)

    def add_term(self, index: int, coef: float) -> LinExpr:
        value = self.terms.get(index, 0.0) + coef
        if value == 0.0:
            self.terms.pop(index, None)
        else:
            self.terms[index] = value
        return self

    def __add__(self, other) -> LinExpr:
        out = self.copy()
        if isinstance(other, LinExpr):
            for index, coef in other.terms.items():
                out.add_term(index, coef)
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self) -> LinExpr:
        return LinExpr({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other) -> LinExpr:
        return self + (-other if isinstance(other, LinExpr) else -float(other))

    def __rsub__(self, other) -> LinExpr:
        return (-self) + other

    def __mul__(self, scalar: float) -> LinExpr:
        scalar = float(scalar)
        if scalar == 0.0:
            return LinExpr()
        return LinExpr({k: v * scalar for k, v in self.terms.items()}, self.const * scalar)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(coef * x[index] for index, coef in self.terms.items())

    def __repr__(self) -> str:
        return f"LinExpr({self.terms}, {self.const})"


@dataclass
class Row:
    """约束行 Σ coefs·x (sense) rhs"""
    coefs: dict[int, float]
    sense: str
    rhs: float
    name: str


@dataclass
class Cut:
    """按变量名给出的附加约束"""
    coefs: dict[str, float]
    sense: str
    rhs: float
    name: str = "cut"


class LinearProgram:
    """最小化型线性规划 / 混合 0-1 规划"""

    def __init__(self, name: str = "program"):
        self.name = name
        self.names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.binary: list[bool] = []
        self.rows: list[Row] = []
        self.objective: dict[int, float] = {}
        self.objective_const = 0.0
        self._index: dict[str, int] = {}

    # ---- 变量 ----

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, binary: bool = False) -> int:
        """添加变量并返回其序号"""
        if name in self._index:
            raise ProgramError(f"变量重复: {name}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub + FEAS_TOL:
            raise ProgramError(f"变量 {name} 的界不合法: [{lb}, {ub}]")
        self._index[name] = len(self.names)
        self.names.append(name)
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        self.binary.append(binary)
        return self._index[name]

    def add_binary(self, name: str) -> int:
        return self.add_var(name, 0.0, 1.0, binary=True)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ProgramError(f"未知变量: {name}") from None

    def has_var(self, name: str) -> bool:
        return name in self._index

    def x(self, name: str) -> LinExpr:
        """按名称取变量表达式"""
        return LinExpr.var(self.index(name))

    def fix(self, name: str, value: float):
        i = self.index(name)
        self.lower[i] = self.upper[i] = float(value)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def binaries(self) -> list[int]:
        return [i for i, b in enumerate(self.binary) if b]

    # ---- 约束与目标 ----

    def add_row(self, coefs: Mapping[int, float], sense: str, rhs: float, name: str | None = None) -> Row | None:
        if sense not in SENSES:
            raise ProgramError(f"未知约束方向: {sense}")
        clean = {int(k): float(v) for k, v in coefs.items() if v != 0.0}
        for k, v in clean.items():
            if not 0 <= k < self.n_vars:
                raise ProgramError(f"约束引用了不存在的变量序号 {k}")
            if not math.isfinite(v):
                raise ProgramError(f"约束系数非有限值: {self.names[k]}")
        if not math.isfinite(rhs):
            raise ProgramError("约束右端项非有限值")
        if not clean:
            # 常量行：直接检查
            ok = ((sense == LE and 0.0 <= rhs + FEAS_TOL) or (sense == GE and 0.0 >= rhs - FEAS_TOL)
                  or (sense == EQ and abs(rhs) <= FEAS_TOL))
            if ok:
                return None
        row = Row(clean, sense, float(rhs), name or f"r{len(self.rows)}")
        self.rows.append(row)
        return row

    def add_constraint(self, lhs: LinExpr, sense: str, rhs: LinExpr | float = 0.0,
                       name: str | None = None) -> Row | None:
        """lhs (sense) rhs，常数项移到右端"""
        expr = lhs - rhs
        return self.add_row(expr.terms, sense, -expr.const, name)

    def set_objective(self, expr: LinExpr):
        self.objective = dict(expr.terms)
        self.objective_const = expr.const

    def add_objective(self, expr: LinExpr):
        for index, coef in expr.terms.items():
            value = self.objective.get(index, 0.0) + coef
            if value == 0.0:
                self.objective.pop(index, None)
            else:
                self.objective[index] = value
        self.objective_const += expr.const

    # ---- 工具 ----

    def copy(self) -> LinearProgram:
        other = LinearProgram(self.name)
        other.names = list(self.names)
        other.lower = list(self.lower)
        other.upper = list(self.upper)
        other.binary = list(self.binary)
        other.rows = [Row(dict(r.coefs), r.sense, r.rhs, r.name) for r in self.rows]
        other.objective = dict(self.objective)
        other.objective_const = self.objective_const
        other._index = dict(self._index)
        return other

    def validate(self):
        for i, name in enumerate(self.names):
            if self.binary[i] and (self.lower[i] < 0 or self.upper[i] > 1):
                raise ProgramError(f"0-1 变量 {name} 的界超出 [0, 1]")
            if math.isnan(self.lower[i]) or math.isnan(self.upper[i]):
                raise ProgramError(f"变量 {name} 的界为 NaN")
        for index, coef in self.objective.items():
            if not math.isfinite(coef):
                raise ProgramError(f"目标系数非有限值: {self.names[index]}")

    def objective_value(self, x: np.ndarray) -> float:
        return self.objective_const + sum(c * x[i] for i, c in self.objective.items())

    def violations(self, x: np.ndarray, tol: float = FEAS_TOL) -> list[str]:
        """返回在 x 处违反的约束名称与变量界"""
        bad = []
        for i, name in enumerate(self.names):
            if x[i] < self.lower[i] - tol or x[i] > self.upper[i] + tol:
                bad.append(name)
            elif self.binary[i] and min(abs(x[i]), abs(x[i] - 1)) > INT_TOL:
                bad.append(name)
        for row in self.rows:
            lhs = sum(c * x[i] for i, c in row.coefs.items())
            scale = tol * max(1.0, abs(row.rhs))
            if ((row.sense == LE and lhs > row.rhs + scale) or (row.sense == GE and lhs < row.rhs - scale)
                    or (row.sense == EQ and abs(lhs - row.rhs) > scale)):
                bad.append(row.name)
        return bad

    def arrays(self) -> _Arrays:
        """稠密矩阵形式"""
        m, n = self.n_rows, self.n_vars
        a = np.zeros((m, n))
        senses = np.empty(m, dtype=object)
        b = np.empty(m)
        for r, row in enumerate(self.rows):
            for i, coef in row.coefs.items():
                a[r, i] = coef
            senses[r] = row.sense
            b[r] = row.rhs
        c = np.zeros(n)
        for i, coef in self.objective.items():
            c[i] = coef
        return _Arrays(a, senses, b, c, np.array(self.lower, dtype=float), np.array(self.upper, dtype=float),
                       np.array(self.binary, dtype=bool), self.objective_const)


@dataclass
class _Arrays:
    a: np.ndarray
    senses: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    const: float


@dataclass
class LpResult:
    """线性规划结果"""
    status: str  # optimal / infeasible / unbounded
    x: np.ndarray | None = None
    objective: float = math.nan
    iterations: int = 0


# ---- 单纯形法 ----

def _pivot(t: np.ndarray, r: int, c: int):
    t[r] /= t[r, c]
    col = t[:, c].copy()
    col[r] = 0.0
    t -= np.outer(col, t[r])


def _iterate(t: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int) -> tuple[str, int]:
    """在目标行上迭代到最优；退化步连续过多时改用 Bland 规则"""
    iterations = 0
    degenerate = 0
    while iterations < max_iter:
        costs = t[-1, :-1]
        candidates = np.flatnonzero((costs < -_COST_TOL) & allowed)
        if candidates.size == 0:
            return "optimal", iterations
        bland = degenerate >= _DEGENERATE_SWITCH
        c = int(candidates[0]) if bland else int(candidates[np.argmin(costs[candidates])])
        col = t[:-1, c]
        positive = col > _PIVOT_TOL
        if not positive.any():
            return "unbounded", iterations
        rhs = t[:-1, -1]
        ratios = np.full(col.shape, np.inf)
        ratios[positive] = rhs[positive] / col[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12)
        r = int(min(ties, key=lambda k: basis[k]))
        degenerate = degenerate + 1 if best <= _PIVOT_TOL else 0
        _pivot(t, r, c)
        basis[r] = c
        iterations += 1
    raise SolverError(f"单纯形迭代超过上限 {max_iter}")


def _solve_arrays(arr: _Arrays, lb: np.ndarray, ub: np.ndarray) -> LpResult:
    n = arr.a.shape[1]
    if np.any(lb > ub + FEAS_TOL):
        return LpResult("infeasible")

    # 变量代换：x = offset + sign·y（自由变量拆分为两列）
    fixed = np.abs(ub - lb) <= 1e-12
    columns: list[tuple[int, float]] = []
    offset = np.where(fixed, lb, 0.0)
    bound_rows: list[tuple[int, float]] = []
    for i in range(n):
        if fixed[i]:
            continue
        if math.isfinite(lb[i]):
            offset[i] = lb[i]
            columns.append((i, 1.0))
            if math.isfinite(ub[i]):
                bound_rows.append((len(columns) - 1, ub[i] - lb[i]))
        elif math.isfinite(ub[i]):
            offset[i] = ub[i]
            columns.append((i, -1.0))
        else:
            columns.append((i, 1.0))
            columns.append((i, -1.0))

    ny = len(columns)
    col_index = np.array([i for i, _ in columns], dtype=int)
    col_sign = np.array([s for _, s in columns], dtype=float)
    a_y = arr.a[:, col_index] * col_sign if ny else np.zeros((arr.a.shape[0], 0))
    b_y = arr.b - arr.a @ offset
    c_y = arr.c[col_index] * col_sign if ny else np.zeros(0)
    const = arr.const + float(arr.c @ offset)

    # 约束全部消去的行直接检查
    keep = np.ones(len(b_y), dtype=bool)
    for r in range(len(b_y)):
        if ny == 0 or not np.any(np.abs(a_y[r]) > 0):
            s, rhs = arr.senses[r], b_y[r]
            ok = (s == LE and rhs >= -FEAS_TOL) or (s == GE and rhs <= FEAS_TOL) or (s == EQ and abs(rhs) <= FEAS_TOL)
            if not ok:
                return LpResult("infeasible")
            keep[r] = False
    a_rows = [a_y[r] for r in np.flatnonzero(keep)]
    senses = [arr.senses[r] for r in np.flatnonzero(keep)]
    rhs = [b_y[r] for r in np.flatnonzero(keep)]
    for j, cap in bound_rows:
        row = np.zeros(ny)
        row[j] = 1.0
        a_rows.append(row)
        senses.append(LE)
        rhs.append(cap)

    m = len(a_rows)
    if m == 0:
        if np.any(c_y < -_COST_TOL):
            return LpResult("unbounded")
        y = np.zeros(ny)
        return LpResult("optimal", _recover(y, columns, offset, n), const, 0)

    a_mat = np.array(a_rows, dtype=float).reshape(m, ny)
    b_vec = np.array(rhs, dtype=float)
    senses = list(senses)
    for r in range(m):
        if b_vec[r] < 0:
            a_mat[r] *= -1.0
            b_vec[r] *= -1.0
            senses[r] = {LE: GE, GE: LE, EQ: EQ}[senses[r]]

    n_slack = sum(1 for s in senses if s != EQ)
    n_art = sum(1 for s in senses if s != LE)
    total = ny + n_slack + n_art
    t = np.zeros((m + 1, total + 1))
    t[:m, :ny] = a_mat
    t[:m, -1] = b_vec
    basis: list[int] = []
    artificial = np.zeros(total, dtype=bool)
    s_col, a_col = ny, ny + n_slack
    for r, s in enumerate(senses):
        if s == LE:
            t[r, s_col] = 1.0
            basis.append(s_col)
            s_col += 1
        elif s == GE:
            t[r, s_col] = -1.0
            s_col += 1
            t[r, a_col] = 1.0
            artificial[a_col] = True
            basis.append(a_col)
            a_col += 1
        else:
            t[r, a_col] = 1.0
            artificial[a_col] = True
            basis.append(a_col)
            a_col += 1

    max_iter = 50 * (m + total) + 1000
    iterations = 0
    allowed = np.ones(total, dtype=bool)
    if n_art:
        # 第一阶段：最小化人工变量之和
        for r, j in enumerate(basis):
            if artificial[j]:
                t[-1] -= t[r]
        t[-1, :-1][artificial] = 0.0
        status, it = _iterate(t, basis, allowed, max_iter)
        iterations += it
        if -t[-1, -1] > FEAS_TOL * max(1.0, float(np.abs(b_vec).max())):
            return LpResult("infeasible", iterations=iterations)
        # 把退化的人工基变量换出，换不出的行是冗余行
        r = 0
        while r < len(basis):
            if artificial[basis[r]]:
                row = t[r, :-1]
                cand = np.flatnonzero((np.abs(row) > _PIVOT_TOL) & ~artificial)
                if cand.size:
                    _pivot(t, r, int(cand[0]))
                    basis[r] = int(cand[0])
                else:
                    t = np.delete(t, r, axis=0)
                    basis.pop(r)
                    continue
            r += 1
        allowed = ~artificial

    # 第二阶段
    cost = np.zeros(total)
    cost[:ny] = c_y
    t[-1, :] = 0.0
    t[-1, :-1] = cost
    for r, j in enumerate(basis):
        if cost[j] != 0.0:
            t[-1] -= cost[j] * t[r]
    t[-1, :-1][artificial] = 0.0
    status, it = _iterate(t, basis, allowed, max_iter)
    iterations += it
    if status == "unbounded":
        return LpResult("unbounded", iterations=iterations)

    y_all = np.zeros(total)
    for r, j in enumerate(basis):
        y_all[j] = t[r, -1]
    y = y_all[:ny]
    x = _recover(y, columns, offset, n)
    return LpResult("optimal", x, float(arr.c @ x + arr.const), iterations)


def _recover(y: np.ndarray, columns: list[tuple[int, float]], offset: np.ndarray, n: int) -> np.ndarray:
    x = offset.astype(float).copy()
    for j, (i, sign) in enumerate(columns):
        x[i] += sign * y[j]
    return x


def solve_lp(lp: LinearProgram) -> LpResult:
    """求解线性松弛（0-1 变量放松到 [0, 1]）

    Returns:
        LpResult，status 为 optimal / infeasible / unbounded
    """
    lp.validate()
    arr = lp.arrays()
    return _solve_arrays(arr, arr.lb.copy(), arr.ub.copy())


# ---- 分支定界 ----

@dataclass
class MipSolution:
    """混合整数规划求解结果"""
    status: str  # optimal / infeasible / budget_exhausted
    values: np.ndarray | None
    objective: float
    bound: float
    nodes: int
    wall_time: float
    names: list[str] = field(default_factory=list, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    @property
    def gap(self) -> float:
        if self.values is None or not math.isfinite(self.bound):
            return math.inf
        return max(0.0, self.objective - self.bound) / max(1.0, abs(self.objective))

    def value(self, name: str) -> float:
        if self.values is None:
            raise SolverError("没有可用解")
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        if self.values is None:
            return {}
        return {name: float(v) for name, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class Budget:
    """求解预算"""
    nodes: int = 400
    seconds: float = 5.0


def _fractional(x: np.ndarray, binaries: list[int]) -> int | None:
    for i in binaries:
        if min(abs(x[i]), abs(x[i] - 1.0)) > INT_TOL:
            return i
    return None


def _snap(x: np.ndarray, binaries: list[int]) -> np.ndarray:
    x = x.copy()
    for i in binaries:
        x[i] = float(round(x[i]))
    return x


def _dominated(bound: float, best: float) -> bool:
    return math.isfinite(best) and bound >= best - FEAS_TOL * max(1.0, abs(best))


def _branch_and_bound(lp: LinearProgram, arr: _Arrays, lb: np.ndarray, ub: np.ndarray, budget: Budget,
                      incumbent: tuple[float, np.ndarray] | None, started: float) -> tuple[str, tuple | None, float, int]:
    binaries = [i for i in range(lp.n_vars) if arr.binary[i]]
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    nodes = 0
    seq = 0
    best_obj = incumbent[0] if incumbent else math.inf
    best_x = incumbent[1] if incumbent else None

    root = _solve_arrays(arr, lb, ub)
    nodes += 1
    if root.status == "unbounded":
        raise SolverError(f"{lp.name}: 线性松弛无界")
    if root.status == "infeasible":
        if best_x is None:
            return "infeasible", None, math.inf, nodes
        return "optimal", (best_obj, best_x), best_obj, nodes
    heapq.heappush(heap, (root.objective, seq, lb, ub))
    results = {seq: root}
    exhausted = False

    while heap:
        bound, key, node_lb, node_ub = heapq.heappop(heap)
        res = results.pop(key)
        if _dominated(bound, best_obj):
            continue
        branch = _fractional(res.x, binaries)
        if branch is None:
            x = _snap(res.x, binaries)
            obj = lp.objective_value(x)
            if obj < best_obj:
                best_obj, best_x = obj, x
            continue
        if nodes + 2 > budget.nodes or time.perf_counter() - started > budget.seconds:
            heapq.heappush(heap, (bound, key, node_lb, node_ub))
            results[key] = res
            exhausted = True
            break
        for value in (0.0, 1.0):  # 先向下分支
            child_lb, child_ub = node_lb.copy(), node_ub.copy()
            child_lb[branch] = child_ub[branch] = value
            child = _solve_arrays(arr, child_lb, child_ub)
            nodes += 1
            if child.status != "optimal":
                continue
            if _dominated(child.objective, best_obj):
                continue
            seq += 1
            results[seq] = child
            heapq.heappush(heap, (child.objective, seq, child_lb, child_ub))

    if exhausted:
        open_bound = min((b for b, *_ in heap), default=best_obj)
        return "budget_exhausted", (best_obj, best_x) if best_x is not None else None, min(open_bound, best_obj), nodes
    if best_x is None:
        return "infeasible", None, math.inf, nodes
    return "optimal", (best_obj, best_x), best_obj, nodes


def solve_mip(lp: LinearProgram, budget: Budget | None = None,
              warm_starts: Iterable[Mapping[str, float]] = (), backend: str = "native") -> MipSolution:
    """求解混合 0-1 规划

    Args:
        lp: 线性规划模型
        budget: 节点与时间预算
        warm_starts: 热启动，每项是部分 0-1 变量取值；固定这些变量求子问题得到初始可行解
        backend: native（内置分支定界）或 highs（scipy.optimize.milp）

    Returns:
        MipSolution；预算耗尽时返回当前最好解及其下界
    """
    budget = budget or Budget()
    if backend == "highs":
        return _solve_highs(lp, budget)
    if backend != "native":
        raise SolverError(f"未知求解后端: {backend}")

    lp.validate()
    started = time.perf_counter()
    arr = lp.arrays()
    nodes = 0
    incumbent: tuple[float, np.ndarray] | None = None

    # 热启动共用总预算：合计不超过一半节点与一半时间
    warm_nodes, warm_seconds = budget.nodes // 2, budget.seconds / 2
    for assignment in warm_starts:
        left = warm_nodes - nodes
        if left < 1 or time.perf_counter() - started >= warm_seconds:
            break
        lb, ub = arr.lb.copy(), arr.ub.copy()
        for name, value in assignment.items():
            i = lp.index(name)
            lb[i] = ub[i] = float(value)
        sub_budget = Budget(min(left, max(1, budget.nodes // 4)), warm_seconds)
        status, found, _, used = _branch_and_bound(lp, arr, lb, ub, sub_budget, incumbent, started)
        nodes += used
        if found is not None and (incumbent is None or found[0] < incumbent[0]):
            incumbent = found

    remaining = Budget(max(1, budget.nodes - nodes), budget.seconds)
    status, found, bound, used = _branch_and_bound(lp, arr, arr.lb.copy(), arr.ub.copy(), remaining,
                                                   incumbent, started)
    nodes += used
    wall = time.perf_counter() - started
    if status == "budget_exhausted":
        logger.warning(f"{lp.name}: 求解预算耗尽 (节点 {nodes}, {wall:.2f}s)")
    if found is None:
        return MipSolution(status, None, math.inf, bound, nodes, wall, list(lp.names))
    return MipSolution(status, found[1], found[0], min(bound, found[0]), nodes, wall, list(lp.names))


def _solve_highs(lp: LinearProgram, budget: Budget) -> MipSolution:
    """通过 scipy 调用 HiGHS"""
    from scipy.optimize import Bounds, LinearConstraint, milp

    lp.validate()
    started = time.perf_counter()
    arr = lp.arrays()
    lower = np.where(arr.senses == LE, -np.inf, arr.b).astype(float)
    upper = np.where(arr.senses == GE, np.inf, arr.b).astype(float)
    constraints = [LinearConstraint(arr.a, lower, upper)] if lp.n_rows else []
    res = milp(arr.c, constraints=constraints, integrality=arr.binary.astype(int), bounds=Bounds(arr.lb, arr.ub),
               options={"time_limit": budget.seconds, "node_limit": budget.nodes, "disp": False})
    wall = time.perf_counter() - started
    names = list(lp.names)
    if res.status == 0:
        x = _snap(np.asarray(res.x), lp.binaries)
        obj = lp.objective_value(x)
        return MipSolution("optimal", x, obj, obj, 0, wall, names)
    if res.status == 2:
        return MipSolution("infeasible", None, math.inf, math.inf, 0, wall, names)
    if res.status == 1:
        if res.x is None:
            return MipSolution("budget_exhausted", None, math.inf, -math.inf, 0, wall, names)
        x = _snap(np.asarray(res.x), lp.binaries)
        bound = getattr(res, "mip_dual_bound", None)
        obj = lp.objective_value(x)
        return MipSolution("budget_exhausted", x, obj, obj if bound is None else float(bound), 0, wall, names)
    raise SolverError(f"{lp.name}: HiGHS 求解失败 ({res.message})")


# ---- 割平面与导出 ----

def apply_cuts(lp: LinearProgram, cuts: Iterable[Cut]) -> LinearProgram:
    """追加割平面，返回新的模型

    Raises:
        ProgramError: 割平面引用了不存在的变量
    """
    out = lp.copy()
    for cut in cuts:
        coefs = {out.index(name): coef for name, coef in cut.coefs.items()}
        out.add_row(coefs, cut.sense, cut.rhs, cut.name)
    return out


def _format_terms(lp: LinearProgram, coefs: Mapping[int, float]) -> str:
    parts = []
    for i in sorted(coefs):
        coef = coefs[i]
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {abs(coef):.12g} {lp.names[i]}")
    text = " ".join(parts) if parts else "0"
    return text[2:] if text.startswith("+ ") else text


def export_lp(lp: LinearProgram) -> str:
    """导出为逐行可读的 LP 文本格式，便于用外部求解器交叉验证"""
    lines = [f"\\ {lp.name}", "Minimize", f" obj: {_format_terms(lp, lp.objective)}"]
    if lp.objective_const:
        lines.append(f"\\ objective constant {lp.objective_const:.12g}")
    lines.append("Subject To")
    for row in lp.rows:
        lines.append(f" {row.name}: {_format_terms(lp, row.coefs)} {row.sense} {row.rhs:.12g}")
    lines.append("Bounds")
    for i, name in enumerate(lp.names):
        lo, hi = lp.lower[i], lp.upper[i]
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" {name} free")
        elif math.isinf(hi):
            lines.append(f" {name} >= {lo:.12g}")
        elif math.isinf(lo):
            lines.append(f" -inf <= {name} <= {hi:.12g}")
        else:
            lines.append(f" {lo:.12g} <= {name} <= {hi:.12g}")
    binaries = [lp.names[i] for i in lp.binaries]
    if binaries:
        lines.append("Binaries")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"
