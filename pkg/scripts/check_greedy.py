#!/usr/bin/env python3
"""Verify that an architecture spec agrees with the ledger it came from.

Reads only the two artifacts (the spec JSON and the JSON-lines ledger) and
uses only the standard library. For every stage it recomputes the winner
as the highest-scoring non-diverged record among the listed candidates,
first candidate winning ties, and compares with the spec.

    python3 scripts/check_greedy.py arch.json ledger.jsonl

Exit status 0 when every stage is consistent, 1 otherwise.
"""

import argparse
import json
import sys


def load_ledger(path):
    records = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                records.setdefault(rec["key"], rec)
    return records


def argmax_first(records):
    best = None
    for rec in records:
        if rec.get("diverged"):
            continue
        if best is None or rec["score"] > best["score"]:
            best = rec
    return best


def stages(spec):
    prov = spec["provenance"]
    for name, section in prov["encoders"].items():
        enc = spec["encoders"][name]
        yield f"encoder[{name}]", enc["kind"], section, enc.get("fixed", False)
    yield "fusion_function", spec["fusion"], prov["fusion_function"], False
    yield "fusion_network", spec["fusion_network"]["kind"], prov["fusion_network"], False


def check(spec, ledger):
    problems = []
    lines = []
    for label, chosen, section, fixed in stages(spec):
        if fixed:
            if section["candidates"]:
                problems.append(f"{label}: fixed module but candidates listed")
            lines.append(f"{label:<24} {chosen:<14} fixed")
            continue
        missing = [k for k in section["candidates"] if k not in ledger]
        if missing:
            problems.append(f"{label}: {len(missing)} candidate keys absent from ledger")
            continue
        records = [ledger[k] for k in section["candidates"]]
        best = argmax_first(records)
        if best is None:
            problems.append(f"{label}: every candidate diverged")
            continue
        ok = best["key"] == section["winner"] and best["module"] == chosen
        if not ok:
            problems.append(f"{label}: spec says {chosen}, ledger argmax is {best['module']}")
        scores = ", ".join(f"{r['module']}={r['score']:.4f}" for r in records)
        lines.append(f"{label:<24} {chosen:<14} {'ok' if ok else 'MISMATCH'}  ({scores})")
    return problems, lines


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("spec")
    p.add_argument("ledger")
    args = p.parse_args(argv)
    with open(args.spec) as fh:
        spec = json.load(fh)
    problems, lines = check(spec, load_ledger(args.ledger))
    print("\n".join(lines))
    for msg in problems:
        print(f"error: {msg}", file=sys.stderr)
    print("consistent" if not problems else f"{len(problems)} inconsistencies")
    return 0 if not problems else 1


if __name__ == "__main__":
    sys.exit(main())
