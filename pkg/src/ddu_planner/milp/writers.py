"""Deterministic model exporters: fixed-format MPS and CPLEX-style LP text.

Output is byte-reproducible for a given model: no timestamps, iteration in
model order, numbers through one ``%.10g`` formatter.

MPS name policy: identifiers are sanitized (non ``[A-Za-z0-9_]`` characters
become ``_``) and truncated to 12 characters. On truncation collision the
later name deterministically becomes ``<prefix>~NNNN`` (7-char prefix,
4-digit counter), so files stay valid without wholesale renaming. The fixed
field layout is: indicator at column 2, then 12/12/15/12/15-wide fields
separated by double spaces.
"""

from __future__ import annotations

import re

import numpy as np

from .model import MilpModel

__all__ = ["export_mps", "export_lp_text"]

_SAN = re.compile(r"[^A-Za-z0-9_]")


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return f"{int(v)}"
    return f"{v:.10g}"


def _names(raw: list[str], fallback: str, width: int | None) -> list[str]:
    """Sanitize, optionally truncate, and deterministically de-collide."""
    out: list[str] = []
    seen: set[str] = set()
    counter = 0
    for k, name in enumerate(raw):
        base = _SAN.sub("_", name) if name else f"{fallback}{k}"
        if not base[0].isalpha():
            base = f"{fallback}{base}"
        if width is not None:
            base = base[:width]
        cand = base
        while cand in seen:
            counter += 1
            stem = base[:7] if width is not None else base
            cand = f"{stem}~{counter:04d}"
            if width is not None:
                cand = cand[:width]
        seen.add(cand)
        out.append(cand)
    return out


def _mps_line(f1: str, f2: str, f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    line = f" {f1:<2} {f2:<12}"
    if f3 or f4 or f5 or f6:
        line += f"  {f3:<12}  {f4:<15}"
    if f5 or f6:
        line += f"  {f5:<12}  {f6:<15}"
    return line.rstrip()


def export_mps(model: MilpModel, path: str) -> None:
    """Write the model as a fixed-format MPS file."""
    a = model.build_arrays()
    vnames = _names([model.variable_name(j) for j in range(a.n_vars)], "C", 12)
    rnames = _names(
        [model.constraint_name(i) or f"R{i}" for i in range(a.n_cons)], "R", 12
    )
    sense_char = {0: "L", 1: "G", 2: "E"}
    lines: list[str] = []
    lines.append(f"NAME          {_SAN.sub('_', model.name)[:32]}")
    lines.append("ROWS")
    lines.append(_mps_line("N", "OBJ"))
    for i in range(a.n_cons):
        lines.append(_mps_line(sense_char[int(a.senses[i])], rnames[i]))

    # per-column entries, in model order
    cols_entries: list[list[tuple[int, float]]] = [[] for _ in range(a.n_vars)]
    for k in range(a.row_idx.shape[0]):
        cols_entries[int(a.col_idx[k])].append((int(a.row_idx[k]), float(a.values[k])))

    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(a.n_vars):
        if bool(a.is_integer[j]) != in_int:
            tag = "INTORG" if not in_int else "INTEND"
            lines.append(_mps_line("", f"MARK{marker:04d}", "'MARKER'", "", f"'{tag}'"))
            marker += 1
            in_int = not in_int
        entries: list[tuple[str, float]] = []
        if a.obj[j] != 0.0:
            entries.append(("OBJ", float(a.obj[j])))
        entries.extend((rnames[i], v) for i, v in cols_entries[j])
        if not entries:
            entries.append(("OBJ", 0.0))  # keep every column present
        for p in range(0, len(entries), 2):
            chunk = entries[p:p + 2]
            if len(chunk) == 2:
                (r1, v1), (r2, v2) = chunk
                lines.append(_mps_line("", vnames[j], r1, _num(v1), r2, _num(v2)))
            else:
                (r1, v1), = chunk
                lines.append(_mps_line("", vnames[j], r1, _num(v1)))
    if in_int:
        lines.append(_mps_line("", f"MARK{marker:04d}", "'MARKER'", "", "'INTEND'"))

    lines.append("RHS")
    for i in range(a.n_cons):
        if a.rhs[i] != 0.0:
            lines.append(_mps_line("", "RHS", rnames[i], _num(float(a.rhs[i]))))

    lines.append("BOUNDS")
    for j in range(a.n_vars):
        lb, ub = float(a.lb[j]), float(a.ub[j])
        integer = bool(a.is_integer[j])
        if integer and lb == 0.0 and ub == 1.0:
            lines.append(_mps_line("BV", "BND", vnames[j]))
            continue
        if lb == ub:
            lines.append(_mps_line("FX", "BND", vnames[j], _num(lb)))
            continue
        if np.isinf(lb) and np.isinf(ub):
            lines.append(_mps_line("FR", "BND", vnames[j]))
            continue
        if np.isinf(lb):
            lines.append(_mps_line("MI", "BND", vnames[j]))
        elif lb != 0.0:
            lines.append(_mps_line("LO", "BND", vnames[j], _num(lb)))
        if not np.isinf(ub):
            lines.append(_mps_line("UP", "BND", vnames[j], _num(ub)))
    lines.append("ENDATA")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _lp_terms(cols: np.ndarray, vals: np.ndarray, names: list[str]) -> str:
    parts: list[str] = []
    for c, v in zip(cols, vals):
        if v == 0.0:
            continue
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {_num(abs(float(v)))} {names[int(c)]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _wrap(line: str, indent: str = "      ", limit: int = 78) -> list[str]:
    if len(line) <= limit:
        return [line]
    out = []
    cur = line
    while len(cur) > limit:
        cut = cur.rfind(" ", 0, limit)
        if cut <= 0:
            break
        out.append(cur[:cut])
        cur = indent + cur[cut + 1:]
    out.append(cur)
    return out


def export_lp_text(model: MilpModel, path: str) -> None:
    """Write the model in CPLEX-style LP text format."""
    a = model.build_arrays()
    vnames = _names([model.variable_name(j) for j in range(a.n_vars)], "C", None)
    rnames = _names(
        [model.constraint_name(i) or f"R{i}" for i in range(a.n_cons)], "R", None
    )
    lines: list[str] = [f"\\ model {model.name}"]
    lines.append("Minimize")
    objcols = np.nonzero(a.obj)[0]
    lines.extend(_wrap(" obj: " + _lp_terms(objcols, a.obj[objcols], vnames)))
    lines.append("Subject To")
    rel = {0: "<=", 1: ">=", 2: "="}
    for i in range(a.n_cons):
        cols, vals, sense, rhs = model.row_entries(i)
        body = _lp_terms(cols, vals, vnames)
        lines.extend(_wrap(f" {rnames[i]}: {body} {rel[int(a.senses[i])]} {_num(float(rhs))}"))
    lines.append("Bounds")
    for j in range(a.n_vars):
        lb, ub = float(a.lb[j]), float(a.ub[j])
        name = vnames[j]
        if lb == 0.0 and np.isinf(ub):
            continue
        if lb == ub:
            lines.append(f" {name} = {_num(lb)}")
        elif np.isinf(lb) and np.isinf(ub):
            lines.append(f" {name} free")
        elif np.isinf(lb):
            lines.append(f" -infinity <= {name} <= {_num(ub)}")
        elif np.isinf(ub):
            lines.append(f" {name} >= {_num(lb)}")
        else:
            lines.append(f" {_num(lb)} <= {name} <= {_num(ub)}")
    gen = [j for j in range(a.n_vars) if a.is_integer[j] and not (a.lb[j] == 0 and a.ub[j] == 1)]
    binv = [j for j in range(a.n_vars) if a.is_integer[j] and a.lb[j] == 0 and a.ub[j] == 1]
    if binv:
        lines.append("Binaries")
        for j in binv:
            lines.append(f" {vnames[j]}")
    if gen:
        lines.append("Generals")
        for j in gen:
            lines.append(f" {vnames[j]}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
