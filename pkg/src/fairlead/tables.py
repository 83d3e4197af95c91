"""Portable text serialization for tabular value functions.

One line per (state, action) entry: the state key's repr, the action index
and the value(s), tab-separated. Vector-valued tables (the mediator's) join
the components with commas. State keys are restored with ast.literal_eval,
so any nesting of tuples, ints, floats, bools and strings round-trips.
"""

from __future__ import annotations

import ast


def save_table(path, table):
    """Write a state -> per-action values table (scalar or vector entries)."""
    with open(path, "w") as fh:
        for state in sorted(table, key=repr):
            row = table[state]
            for action, value in enumerate(row):
                if isinstance(value, (list, tuple)):
                    text = ",".join(repr(float(v)) for v in value)
                else:
                    text = repr(float(value))
                fh.write(f"{state!r}\t{action}\t{text}\n")


def load_table(path):
    """Read a table written by save_table."""
    table = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            state_text, action_text, value_text = line.split("\t")
            state = ast.literal_eval(state_text)
            action = int(action_text)
            if "," in value_text:
                value = [float(v) for v in value_text.split(",")]
            else:
                value = float(value_text)
            row = table.setdefault(state, [])
            while len(row) <= action:
                row.append(None)
            row[action] = value
    return table


def tables_equal(a, b, tol=0.0):
    """Exact (or toleranced) comparison of two serialized-table dicts."""
    if set(a) != set(b):
        return False
    for state, row_a in a.items():
        row_b = b[state]
        if len(row_a) != len(row_b):
            return False
        for va, vb in zip(row_a, row_b):
            va_list = va if isinstance(va, (list, tuple)) else [va]
            vb_list = vb if isinstance(vb, (list, tuple)) else [vb]
            if len(va_list) != len(vb_list):
                return False
            for x, y in zip(va_list, vb_list):
                if abs(x - y) > tol:
                    return False
    return True
