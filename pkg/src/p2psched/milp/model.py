"""Solver-agnostic container for maximize-sense mixed binary linear programs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
BINARY = "binary"

LE, EQ, GE = "<=", "=", ">="
_RELATIONS = (LE, EQ, GE)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT = "time_limit"


class ModelError(ValueError):
    """Raised when a model violates its structural invariants."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = math.inf


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[int, float], ...]
    relation: str
    rhs: float


@dataclass
class Solution:
    status: str
    values: dict[str, float] = field(default_factory=dict)
    objective: float = math.nan
    node_count: int = 0
    gap: float = math.nan
    bound: float = math.nan
    trace: list = field(default_factory=list, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    @property
    def has_values(self) -> bool:
        return bool(self.values) or self.status == OPTIMAL


@dataclass
class StandardForm:
    """Array view of a model: maximize c @ x + offset, row_lo <= A x <= row_hi, lb <= x <= ub."""

    c: np.ndarray
    offset: float
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray


class MilpModel:
    """A linear model with continuous and binary variables, always maximized.

    Variables and constraints are addressed by unique names; terms inside a
    constraint refer to variables by their insertion index.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self._var_index: dict[str, int] = {}
        self._con_names: set[str] = set()

    # construction -----------------------------------------------------

    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = math.inf) -> int:
        if name in self._var_index:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        lb, ub = float(lb), float(ub)
        if kind == BINARY and not (0.0 <= lb <= ub <= 1.0):
            raise ModelError(f"binary variable {name!r} must have bounds within [0, 1]")
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        self._var_index[name] = len(self.variables)
        self.variables.append(Variable(name, kind, lb, ub))
        return self._var_index[name]

    def add_constraint(self, name: str, terms: Mapping[int | str, float] | Iterable[tuple[int | str, float]],
                       relation: str, rhs: float) -> None:
        if name in self._con_names:
            raise ModelError(f"duplicate constraint name {name!r}")
        if relation not in _RELATIONS:
            raise ModelError(f"unknown relation {relation!r}")
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[int, float] = {}
        for var, coef in items:
            j = self._resolve(var)
            merged[j] = merged.get(j, 0.0) + float(coef)
        packed = tuple((j, a) for j, a in sorted(merged.items()) if a != 0.0)
        self._con_names.add(name)
        self.constraints.append(Constraint(name, packed, relation, float(rhs)))

    def set_objective(self, terms: Mapping[int | str, float], constant: float = 0.0) -> None:
        self.objective = {}
        self.objective_constant = float(constant)
        self.add_objective(terms)

    def add_objective(self, terms: Mapping[int | str, float], constant: float = 0.0) -> None:
        for var, coef in terms.items():
            j = self._resolve(var)
            self.objective[j] = self.objective.get(j, 0.0) + float(coef)
        self.objective_constant += float(constant)

    def _resolve(self, var: int | str) -> int:
        if isinstance(var, str):
            try:
                return self._var_index[var]
            except KeyError:
                raise ModelError(f"unknown variable {var!r}") from None
        j = int(var)
        if not 0 <= j < len(self.variables):
            raise ModelError(f"variable index {j} out of range")
        return j

    # queries ----------------------------------------------------------

    def index_of(self, name: str) -> int:
        return self._var_index[name]

    def has_var(self, name: str) -> bool:
        return name in self._var_index

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_binaries(self) -> int:
        return sum(v.kind == BINARY for v in self.variables)

    def validate(self) -> list[str]:
        problems = []
        n = len(self.variables)
        for v in self.variables:
            if v.kind == BINARY and not (0.0 <= v.lb <= v.ub <= 1.0):
                problems.append(f"binary {v.name} has bounds [{v.lb}, {v.ub}]")
        for con in self.constraints:
            for j, _ in con.terms:
                if not 0 <= j < n:
                    problems.append(f"constraint {con.name} references missing variable {j}")
        return problems

    def objective_value(self, values: Mapping[str, float]) -> float:
        total = self.objective_constant
        for j, coef in self.objective.items():
            total += coef * values.get(self.variables[j].name, 0.0)
        return total

    def max_violation(self, values: Mapping[str, float]) -> float:
        """Largest bound or row violation of ``values`` (missing names read as 0)."""
        worst = 0.0
        for v in self.variables:
            x = values.get(v.name, 0.0)
            worst = max(worst, v.lb - x, x - v.ub)
        for con in self.constraints:
            lhs = sum(a * values.get(self.variables[j].name, 0.0) for j, a in con.terms)
            if con.relation == LE:
                worst = max(worst, lhs - con.rhs)
            elif con.relation == GE:
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst

    # transformations --------------------------------------------------

    def copy(self) -> "MilpModel":
        other = MilpModel(self.name)
        other.variables = list(self.variables)
        other.constraints = list(self.constraints)
        other.objective = dict(self.objective)
        other.objective_constant = self.objective_constant
        other._var_index = dict(self._var_index)
        other._con_names = set(self._con_names)
        return other

    def with_bounds(self, bounds: Mapping[str, tuple[float, float]]) -> "MilpModel":
        """Copy with selected variable bounds replaced."""
        other = self.copy()
        for name, (lb, ub) in bounds.items():
            j = other._var_index[name]
            v = other.variables[j]
            if v.kind == BINARY and not (0.0 <= lb <= ub <= 1.0):
                raise ModelError(f"binary {name} cannot take bounds [{lb}, {ub}]")
            other.variables[j] = Variable(v.name, v.kind, float(lb), float(ub))
        return other

    def relaxed(self) -> "MilpModel":
        """Copy with every binary turned into a continuous variable on its bounds."""
        other = self.copy()
        other.variables = [Variable(v.name, CONTINUOUS, v.lb, v.ub) for v in self.variables]
        return other

    def standard_form(self) -> StandardForm:
        n, m = len(self.variables), len(self.constraints)
        c = np.zeros(n)
        for j, coef in self.objective.items():
            c[j] = coef
        rows, cols, data = [], [], []
        row_lo = np.full(m, -np.inf)
        row_hi = np.full(m, np.inf)
        for i, con in enumerate(self.constraints):
            for j, a in con.terms:
                rows.append(i)
                cols.append(j)
                data.append(a)
            if con.relation in (LE, EQ):
                row_hi[i] = con.rhs
            if con.relation in (GE, EQ):
                row_lo[i] = con.rhs
        A = sp.csr_matrix((data, (rows, cols)), shape=(m, n))
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        binary = np.array([v.kind == BINARY for v in self.variables], dtype=bool)
        return StandardForm(c, self.objective_constant, A, row_lo, row_hi, lb, ub, binary)

    def solution_from_array(self, x: np.ndarray) -> dict[str, float]:
        return {v.name: float(x[j]) for j, v in enumerate(self.variables)}
