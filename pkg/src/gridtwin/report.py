"""Plot-ready CSVs and a summary, derived only from a finished run directory.

Nothing here solves a power flow: every number comes from the artifacts
written by :func:`gridtwin.harness.write_run`.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

from .harness import compute_distribution_summaries, render_summary


class ReportError(ValueError):
    pass


def _read_csv(path):
    if not path.exists():
        raise ReportError(f"missing run artifact {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _num(s):
    return float(s) if s not in ("", None) else math.nan


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and not math.isfinite(x)) else repr(float(x))


def voltage_envelopes(run: Path):
    """{(scenario, stage): [(bus, min_v, max_v)]} in file order."""
    out = defaultdict(list)
    for row in _read_csv(run / "bus_voltage_extremes.csv"):
        out[(row["scenario"], row["stage"])].append(
            (int(row["bus"]), _num(row["min_v"]), _num(row["max_v"])))
    return dict(out)


def delta_distributions(run: Path, mode_prefix="corrective"):
    """Per scenario (plus a pooled set) generator summaries of dP and dQ."""
    dp, dq = defaultdict(lambda: defaultdict(list)), defaultdict(lambda: defaultdict(list))
    for row in _read_csv(run / "deltas.csv"):
        if not row["mode"].startswith(mode_prefix):
            continue
        g = int(row["generator"])
        for key in (row["scenario"], "pooled"):
            dp[key][g].append(float(row["dp_mw"]))
            dq[key][g].append(float(row["dq_mvar"]))
    out = []
    for key in sorted(dp, key=lambda k: (k == "pooled", k)):
        for qty, src in (("dp_mw", dp), ("dq_mvar", dq)):
            for s in compute_distribution_summaries(dict(sorted(src[key].items()))):
                out.append({"scenario": key, "quantity": qty, **s})
    return out


def import_daily(run: Path):
    """Daily import energy without and with redispatch per scenario (MWh)."""
    acc = {}
    for row in _read_csv(run / "import_comparison.csv"):
        a, b = _num(row["p_ext_without_mw"]), _num(row["p_ext_with_mw"])
        if not (math.isfinite(a) and math.isfinite(b)):
            continue
        key = (row["scenario"], row["timestamp"][:10])
        rec = acc.setdefault(key, [[], [], []])
        rec[0].append(a * 0.25)
        rec[1].append(b * 0.25)
        rec[2].append(_num(row["reduction_mwh"]))
    return [(sc, day, math.fsum(v[0]), math.fsum(v[1]), math.fsum(v[2]))
            for (sc, day), v in acc.items()]


def generate(run_dir, out_dir=None, scenario=None) -> list[Path]:
    run = Path(run_dir)
    if not run.is_dir():
        raise ReportError(f"run directory {run} not found")
    mpath = run / "metrics.json"
    if not mpath.exists():
        raise ReportError(f"{run} has no metrics.json; is it a run directory?")
    metrics = json.loads(mpath.read_text())
    out = Path(out_dir) if out_dir else run / "report"
    out.mkdir(parents=True, exist_ok=True)
    written = []

    env = voltage_envelopes(run)
    names = [s["name"] for s in metrics["scenarios"]]
    pick = scenario or (names[0] if names else None)
    if (pick, "without") not in env:
        raise ReportError(f"no voltage data for scenario {pick!r}; available: {names}")
    p = out / "voltage_envelope.csv"
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bus", "min_v", "max_v"))
        for bus, lo, hi in env[(pick, "without")]:
            w.writerow((bus, _fmt(lo), _fmt(hi)))
    written.append(p)
    p = out / "voltage_envelopes.csv"
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scenario", "stage", "bus", "min_v", "max_v"))
        for (sc, stage), rows in env.items():
            for bus, lo, hi in rows:
                w.writerow((sc, stage, bus, _fmt(lo), _fmt(hi)))
    written.append(p)

    p = out / "delta_distribution.csv"
    cols = ("scenario", "quantity", "generator", "activations", "no_activation", "min", "q1",
            "median", "q3", "max", "mean")
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in delta_distributions(run):
            w.writerow([r[c] if c in ("scenario", "quantity", "generator", "activations",
                                      "no_activation") else _fmt(r[c]) for c in cols])
    written.append(p)

    p = out / "import_daily.csv"
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scenario", "date", "without_smfae_mwh", "with_smfae_mwh", "reduction_mwh"))
        for sc, day, a, b, r in import_daily(run):
            w.writerow((sc, day, _fmt(a), _fmt(b), _fmt(r)))
    written.append(p)

    p = out / "summary.md"
    p.write_text(render_summary(metrics))
    written.append(p)
    return written
