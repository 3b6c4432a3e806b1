#!/usr/bin/env python3
"""Recompute the violation metrics of a run from its CSV trace.

Usage: recompute_summary.py CONFIG.json TRACE.csv [SUMMARY.json]

Prints the recomputed metrics as JSON. With a summary file, exits 1 unless
every recomputed metric equals the reported one exactly.
"""
import csv
import json
import math
import sys

STATE_TOL = 1e-6
INPUT_TOL = 1e-6


def normalized_rows(config):
    rows = []
    for row, offset in zip(config["polytope"]["rows"], config["polytope"]["offsets"]):
        norm = math.sqrt(sum(float(v) * float(v) for v in row))
        rows.append(([float(v) / norm for v in row], float(offset) / norm))
    return rows


def slack(rows, x):
    best = math.inf
    for r, l in rows:
        dot = 0.0
        for a, b in zip(r, x):
            dot += a * b
        best = min(best, l - dot)
    return best


def recompute(config, trace_path):
    rows = normalized_rows(config)
    n = len(config["x0"])
    u_max = float(config["u_max"])
    out = {
        "samples": 0,
        "final_time": 0.0,
        "max_state_violation": -math.inf,
        "state_violations": 0,
        "max_input_excess": -math.inf,
        "input_violations": 0,
        "max_abs_input": 0.0,
    }
    flag_mismatch = 0
    with open(trace_path, newline="") as fh:
        for rec in csv.DictReader(fh):
            x = [float(rec[f"x{i + 1}"]) for i in range(n)]
            u = float(rec["u"])
            s = slack(rows, x)
            state_bad = s < -STATE_TOL
            input_bad = abs(u) > u_max + INPUT_TOL
            flag_mismatch += (rec["state_ok"] == "1") == state_bad
            flag_mismatch += (rec["input_ok"] == "1") == input_bad
            out["samples"] += 1
            out["final_time"] = float(rec["t"])
            out["max_state_violation"] = max(out["max_state_violation"], -s)
            out["state_violations"] += state_bad
            out["max_input_excess"] = max(out["max_input_excess"], abs(u) - u_max)
            out["input_violations"] += input_bad
            out["max_abs_input"] = max(out["max_abs_input"], abs(u))
    return out, flag_mismatch


def main(argv):
    if len(argv) not in (3, 4):
        print(__doc__, file=sys.stderr)
        return 2
    with open(argv[1]) as fh:
        config = json.load(fh)
    metrics, flag_mismatch = recompute(config, argv[2])
    print(json.dumps(dict(metrics, flag_mismatch=flag_mismatch), indent=2))
    if len(argv) == 4:
        with open(argv[3]) as fh:
            summary = json.load(fh)
        bad = [k for k, v in metrics.items() if summary.get(k) != v]
        if bad or flag_mismatch:
            print(f"mismatch in {bad}, {flag_mismatch} flag disagreements", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
