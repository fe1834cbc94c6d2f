#!/usr/bin/env python3
"""Regenerate design_oracle.inc: design matrices built by patsy for a small
table, frozen as C++ initializers for the design-matrix tests."""

import pathlib
import re

import numpy as np
import pandas as pd
import patsy

HERE = pathlib.Path(__file__).resolve().parent

CSV = """y,g,h,x,k
1.5,a,u,0.5,1
2.0,b,u,1.25,2
0.7,c,u,-0.75,10
3.1,a,v,2.0,2
2.2,b,v,0.0,10
1.1,c,v,1.5,1
0.4,a,u,-1.0,10
2.8,b,v,3.0,1
1.9,c,u,0.25,2
2.5,a,v,1.75,1
0.9,b,u,-0.5,2
1.6,c,v,2.5,10
"""

# (our formula, patsy formula)
CASES = [
    ("y ~ g + x", "y ~ g + x"),
    ("y ~ g*x", "y ~ g*x"),
    ("y ~ g*h", "y ~ g*h"),
    ("y ~ x*h", "y ~ x*h"),
    ("y ~ 0 + g + x", "y ~ 0 + g + x"),
    ("y ~ 0 + x + g", "y ~ 0 + x + g"),
    ("y ~ g + g:x", "y ~ g + g:x"),
    ("y ~ k + x", "y ~ C(k) + x"),
    ("y ~ g + h + g:h:x", "y ~ g + h + g:h:x"),
]


def our_label(name):
    if name == "Intercept":
        return "(Intercept)"
    parts = []
    for p in name.split(":"):
        m = re.fullmatch(r"(?:C\((\w+)\)|(\w+))\[(?:T\.)?([^\]]+)\]", p)
        parts.append((m.group(1) or m.group(2)) + m.group(3) if m else p)
    return ":".join(parts)


def main():
    from io import StringIO

    df = pd.read_csv(StringIO(CSV))
    df["k"] = df["k"].astype(int)
    out = ["// Generated by make_design_oracle.py; do not edit.", ""]
    out.append("inline constexpr const char* kDesignOracleCsv =")
    for line in CSV.strip().splitlines():
        out.append(f'    "{line}\\n"')
    out[-1] += ";"
    out.append("")
    out.append("inline const std::vector<DesignOracleCase> kDesignOracleCases = {")
    for ours, theirs in CASES:
        x = patsy.dmatrix(theirs.split("~")[1], df, return_type="dataframe")
        labels = ", ".join(f'"{our_label(c)}"' for c in x.columns)
        rows = ",\n       ".join("{" + ", ".join(repr(float(v)) for v in r) + "}" for r in x.to_numpy())
        out.append(f'    {{"{ours}",\n     {{{labels}}},\n     {{{rows}}}}},')
    out.append("};")
    (HERE / "design_oracle.inc").write_text("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
