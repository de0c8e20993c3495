"""Day-ahead scheduling of prosumer communities with P2P trading, DR and guest-EV parking."""

from .milp import MilpModel, Solution, SolverOptions, export_lp_format, solve_lp, solve_milp
from .model import EvScenario, Instance, PriceSeries, UnitProfile, load_instance, save_instance, validate
from .report import ExchangeSeries, exchange_series, profit_table
from .scenarios import EvDistribution, ReducedSet, kmeans_reduce, sample_scenarios
from .scheduler import (MONOLITHIC, TWO_STAGE, ProfitBreakdown, VariableIndex, build_model, evaluate_profit,
                        fix_assignment_and_solve, solve_scenarios)

__all__ = [
    "EvDistribution", "EvScenario", "ExchangeSeries", "Instance", "MONOLITHIC", "MilpModel", "PriceSeries",
    "ProfitBreakdown", "ReducedSet", "Solution", "SolverOptions", "TWO_STAGE", "UnitProfile", "VariableIndex",
    "build_model", "evaluate_profit", "exchange_series", "export_lp_format", "fix_assignment_and_solve",
    "kmeans_reduce", "load_instance", "profit_table", "sample_scenarios", "save_instance", "solve_lp",
    "solve_milp", "solve_scenarios", "validate",
]
