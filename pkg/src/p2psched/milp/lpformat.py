"""Writer for the CPLEX-style textual LP dialect."""

from __future__ import annotations

import math
import re

from .model import BINARY, EQ, GE, LE, MilpModel

_RESERVED = {
    "max", "maximize", "maximum", "maximise", "min", "minimize", "minimum", "minimise",
    "subject", "to", "st", "s.t.", "such", "that", "bounds", "bound", "binary", "binaries", "bin",
    "general", "generals", "gen", "integer", "integers", "semi", "semis", "semi-continuous",
    "free", "infinity", "inf", "end", "sos",
}
_BAD = re.compile(r"[^A-Za-z0-9_]")
CONSTANT_VAR = "obj_constant"
_LINE = 200


def _num(x: float) -> str:
    if x == 0:
        return "0"
    return repr(float(x))


def sanitize(name: str) -> str:
    s = _BAD.sub("_", name).rstrip("_") or "_"
    if s[0].isdigit() or s[0] in "eE" or s.lower() in _RESERVED:
        s = "n_" + s
    return s[:250]


class _Namer:
    def __init__(self, taken: set[str] = frozenset()):
        self.used = set(taken)
        self.table: list[tuple[str, str]] = []

    def __call__(self, name: str) -> str:
        base = sanitize(name)
        out, k = base, 1
        while out in self.used:
            out = f"{base}_{k}"
            k += 1
        self.used.add(out)
        if out != name:
            self.table.append((out, name))
        return out


def _wrap(head: str, parts: list[str], tail: str) -> list[str]:
    lines, cur = [], head
    for part in parts:
        if len(cur) + len(part) + 1 > _LINE:
            lines.append(cur)
            cur = "   "
        cur += " " + part
    if tail:
        if len(cur) + len(tail) + 1 > _LINE:
            lines.append(cur)
            cur = "   "
        cur += " " + tail
    lines.append(cur)
    return lines


def _terms(pairs) -> list[str]:
    parts = []
    for k, (name, coef) in enumerate(pairs):
        sign = "-" if coef < 0 else "+"
        mag = _num(abs(coef))
        if k == 0:
            parts.append(f"{'-' if coef < 0 else ''}{mag} {name}")
        else:
            parts.append(f"{sign} {mag} {name}")
    return parts


def export_lp_format(model: MilpModel) -> str:
    """Render ``model`` as LP text.

    Variables with equal bounds are substituted by their value: they add to
    the objective constant and shift row right-hand sides. A row left with no
    free variable is dropped when it holds and kept in a contradictory form
    otherwise. The objective constant is carried by a variable fixed at 1 so
    readers without constant support reproduce the same optimum. Renamed
    identifiers are listed in a comment table at the end of the file.
    """
    if not model.variables and not model.constraints and model.objective_constant == 0.0:
        return f"\\ Problem: {model.name}\nEnd\n"
    var_namer = _Namer({CONSTANT_VAR})
    vnames = [var_namer(v.name) for v in model.variables]
    fixed = [v.lb == v.ub for v in model.variables]
    con_namer = _Namer({"obj"})
    lines = [f"\\ Problem: {model.name}", "Maximize"]

    constant = model.objective_constant
    obj_pairs = []
    for j, c in sorted(model.objective.items()):
        if fixed[j]:
            constant += c * model.variables[j].lb
        elif c != 0.0:
            obj_pairs.append((vnames[j], c))
    rows = []
    needs_one = constant != 0.0
    sym = {LE: "<=", EQ: "=", GE: ">="}
    for con in model.constraints:
        shift = sum(a * model.variables[j].lb for j, a in con.terms if fixed[j])
        pairs = [(vnames[j], a) for j, a in con.terms if not fixed[j]]
        rhs = con.rhs - shift
        if not pairs:
            ok = {LE: 0.0 <= rhs + 1e-9, GE: 0.0 >= rhs - 1e-9, EQ: abs(rhs) <= 1e-9}[con.relation]
            if ok:
                continue
            # keep the contradiction visible: 1 * one (fixed at 1) against rhs + 1
            pairs, rhs, needs_one = [(CONSTANT_VAR, 1.0)], rhs + 1.0, True
        rows.append((con, pairs, rhs))

    if constant != 0.0:
        obj_pairs.append((CONSTANT_VAR, constant))
    if obj_pairs:
        lines += _wrap(" obj:", _terms(obj_pairs), "")
    else:
        lines.append(" obj:")

    lines.append("Subject To")
    for con, pairs, rhs in rows:
        name = con_namer(con.name)
        lines += _wrap(f" {name}:", _terms(pairs), f"{sym[con.relation]} {_num(rhs)}")

    lines.append("Bounds")
    binaries = []
    emitted = set()
    for v, name, is_fixed in zip(model.variables, vnames, fixed):
        if is_fixed:
            continue
        emitted.add(name)
        if v.kind == BINARY:
            binaries.append(name)
            if v.lb == 0.0 and v.ub == 1.0:
                continue
        if math.isinf(v.lb) and math.isinf(v.ub):
            lines.append(f" {name} free")
        elif v.lb == 0.0 and math.isinf(v.ub):
            continue
        else:
            lo = "-infinity" if math.isinf(v.lb) else _num(v.lb)
            hi = "+infinity" if math.isinf(v.ub) else _num(v.ub)
            lines.append(f" {lo} <= {name} <= {hi}")
    if needs_one:
        lines.append(f" {CONSTANT_VAR} = 1")

    if binaries:
        lines.append("Binary")
        lines += _wrap("", binaries, "")
    lines.append("End")

    mapping = [(short, full) for short, full in var_namer.table if short in emitted] + con_namer.table
    if mapping:
        lines.append("\\ name map (LP identifier = model name)")
        lines += [f"\\ {short} = {full}" for short, full in mapping]
    return "\n".join(lines) + "\n"
