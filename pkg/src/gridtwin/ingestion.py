"""Feeder measurement ingestion.

Input is a CSV of 15-minute mean active power per 10 kV feeder::

    timestamp,substation_id,feeder_id,injected_kw,withdrawn_kw
    2024-01-01T00:00:00Z,S03,F12,150.0,820.5

Feeders are summed per substation, reactive power is reconstructed from fixed
power factors (loads 0.95 lagging, generation 0.99 injecting) and the result
is a :class:`SubstationSeries` per substation.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from functools import lru_cache
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)

HEADER = ("timestamp", "substation_id", "feeder_id", "injected_kw", "withdrawn_kw")
SERIES_HEADER = ("timestamp", "substation_id", "p_gen_mw", "q_gen_mvar", "p_load_mw", "q_load_mvar")
STEP_S = 15 * 60
PF_LOAD = 0.95
PF_GEN = 0.99
GAP_POLICIES = ("skip", "hold-last", "zero")


class MeasurementError(ValueError):
    pass


@dataclass(frozen=True)
class FeederMeasurement:
    timestamp: datetime
    substation_id: str
    feeder_id: str
    injected_kw: float
    withdrawn_kw: float
    line: int = 0


@dataclass
class SubstationSeries:
    substation_id: str
    timestamps: np.ndarray  # datetime64[s], UTC
    p_gen_mw: np.ndarray
    q_gen_mvar: np.ndarray
    p_load_mw: np.ndarray
    q_load_mvar: np.ndarray
    gaps: list = field(default_factory=list)

    def __len__(self):
        return self.timestamps.size


@lru_cache(maxsize=4096)
def parse_timestamp(text: str) -> datetime:
    """ISO-8601 instant to an aware UTC datetime; naive input is taken as UTC."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(ts) -> str:
    if isinstance(ts, datetime):
        return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return str(np.datetime64(ts, "s")) + "Z"


@lru_cache(maxsize=4096)
def _to_datetime64(dt: datetime) -> np.datetime64:
    return np.datetime64(dt.replace(tzinfo=None), "s")


class MeasurementStream:
    """Record-at-a-time validator, usable for live replay.

    ``push`` accepts one CSV row (already split, or as a raw line) and returns
    the validated :class:`FeederMeasurement`. Duplicates are detected across
    everything pushed so far.
    """

    def __init__(self):
        self._seen: dict[tuple, int] = {}
        self.count = 0

    def push(self, row, line: int = 0) -> FeederMeasurement:
        if isinstance(row, str):
            row = next(csv.reader([row]))
        if len(row) != len(HEADER):
            raise MeasurementError(f"malformed row, line {line}: expected {len(HEADER)} columns, got {len(row)}")
        stamp, sub, feeder, inj, wdr = row
        try:
            dt = parse_timestamp(stamp)
            inj_kw = float(inj)
            wdr_kw = float(wdr)
        except ValueError as exc:
            raise MeasurementError(f"malformed row, line {line}: {exc}") from None
        sub, feeder = sub.strip(), feeder.strip()
        if not sub or not feeder:
            raise MeasurementError(f"malformed row, line {line}: empty substation or feeder id")
        if not (math.isfinite(inj_kw) and math.isfinite(wdr_kw)):
            raise MeasurementError(f"malformed row, line {line}: non-finite power value")
        if inj_kw < 0 or wdr_kw < 0:
            raise MeasurementError(f"negative power channel, line {line}")
        if dt.second or dt.microsecond or dt.minute % 15:
            raise MeasurementError(f"off-grid timestamp {stamp!r}, line {line}")
        key = (dt, sub, feeder)
        if key in self._seen:
            raise MeasurementError(
                f"duplicate measurement for {sub}/{feeder} at {format_timestamp(dt)}: "
                f"lines {self._seen[key]} and {line}")
        self._seen[key] = line
        self.count += 1
        return FeederMeasurement(dt, sub, feeder, inj_kw, wdr_kw, line)


def _lines(source) -> Iterator[str]:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                     and not source.startswith("timestamp")):
        with open(source, newline="", encoding="utf-8") as fh:
            yield from fh
    elif isinstance(source, str):
        yield from io.StringIO(source)
    else:
        yield from source


def iter_measurements(source) -> Iterator[FeederMeasurement]:
    """Stream validated records from a path, CSV text, or iterable of lines."""
    reader = csv.reader(_lines(source))
    try:
        header = next(reader)
    except StopIteration:
        raise MeasurementError("empty measurement file") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise MeasurementError(f"bad header, line 1: expected {','.join(HEADER)}")
    stream = MeasurementStream()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        yield stream.push(row, lineno)


def parse_measurements(source) -> list[FeederMeasurement]:
    records = list(iter_measurements(source))
    records.sort(key=lambda r: (r.timestamp, r.substation_id, r.feeder_id))
    return records


def reconstruct_reactive(p_mw, role: str, pf: float | None = None):
    """Reactive power from active power at a fixed power factor.

    ``role="load"`` gives consumed MVAr at 0.95 lagging, ``role="generation"``
    injected MVAr at 0.99. Scalars and arrays are both accepted.
    """
    if role not in ("load", "generation"):
        raise ValueError(f"role must be 'load' or 'generation', not {role!r}")
    if pf is None:
        pf = PF_LOAD if role == "load" else PF_GEN
    if not 0 < pf <= 1:
        raise ValueError("power factor must lie in (0, 1]")
    p = np.asarray(p_mw, dtype=float)
    if np.any(p < 0):
        raise ValueError("active power must be non-negative")
    q = p * math.tan(math.acos(pf))
    return float(q) if q.ndim == 0 else q


def aggregate_to_substation(records: Iterable[FeederMeasurement], policy: str = "hold-last",
                            pf_load: float = PF_LOAD, pf_gen: float = PF_GEN) -> dict[str, SubstationSeries]:
    """Sum feeders per substation on a common 15-minute grid.

    The grid spans the first to the last timestamp seen in ``records``.
    Missing feeder samples follow ``policy``: ``skip`` drops the timestamp for
    that substation, ``zero`` counts the feeder as 0, ``hold-last`` repeats the
    feeder's previous sample (0 before its first sample). Every filled gap is
    logged and listed in ``SubstationSeries.gaps``.
    """
    if policy not in GAP_POLICIES:
        raise ValueError(f"unknown gap policy {policy!r}; choose from {GAP_POLICIES}")
    by_sub: dict[str, dict[str, list]] = {}
    t_min = t_max = None
    for r in records:
        ts = _to_datetime64(r.timestamp)
        by_sub.setdefault(r.substation_id, {}).setdefault(r.feeder_id, []).append(
            (ts, r.injected_kw, r.withdrawn_kw))
        t_min = ts if t_min is None or ts < t_min else t_min
        t_max = ts if t_max is None or ts > t_max else t_max
    if not by_sub:
        raise MeasurementError("no measurement records to aggregate")

    grid = np.arange(t_min, t_max + np.timedelta64(STEP_S, "s"), np.timedelta64(STEP_S, "s"))
    T = grid.size
    out = {}
    for sub in sorted(by_sub):
        feeders = by_sub[sub]
        if not feeders:
            raise MeasurementError(f"substation {sub} has no feeders")
        inj_sum = np.zeros(T)
        wdr_sum = np.zeros(T)
        keep = np.ones(T, dtype=bool)
        gaps = []
        for fid in sorted(feeders):
            rows = feeders[fid]
            pos = ((np.array([r[0] for r in rows]) - t_min) // np.timedelta64(STEP_S, "s")).astype(np.int64)
            inj = np.full(T, np.nan)
            wdr = np.full(T, np.nan)
            inj[pos] = [r[1] for r in rows]
            wdr[pos] = [r[2] for r in rows]
            missing = np.isnan(inj)
            if missing.any():
                for k in np.flatnonzero(missing):
                    gaps.append((format_timestamp(grid[k]), fid))
                if policy == "skip":
                    keep &= ~missing
                    inj[missing] = 0.0
                    wdr[missing] = 0.0
                elif policy == "zero":
                    inj[missing] = 0.0
                    wdr[missing] = 0.0
                else:
                    idx = np.where(missing, 0, np.arange(T))
                    np.maximum.accumulate(idx, out=idx)
                    lead = missing & (idx == 0) & missing[0]
                    inj = inj[idx]
                    wdr = wdr[idx]
                    inj[lead] = 0.0
                    wdr[lead] = 0.0
                log.info("substation %s feeder %s: %d missing samples (%s)", sub, fid,
                         int(missing.sum()), policy)
            inj_sum += inj
            wdr_sum += wdr
        p_gen = inj_sum[keep] / 1000.0
        p_load = wdr_sum[keep] / 1000.0
        out[sub] = SubstationSeries(
            substation_id=sub,
            timestamps=grid[keep],
            p_gen_mw=p_gen,
            q_gen_mvar=reconstruct_reactive(p_gen, "generation", pf_gen),
            p_load_mw=p_load,
            q_load_mvar=reconstruct_reactive(p_load, "load", pf_load),
            gaps=gaps,
        )
    return out


def historical_max(series) -> float:
    """Largest active generation over the horizon (MW)."""
    p = series.p_gen_mw if isinstance(series, SubstationSeries) else np.asarray(series, float)
    if p.size == 0:
        raise ValueError("empty series: historical maximum undefined")
    return float(np.max(p))


def write_substation_csv(series: dict[str, SubstationSeries], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for sub in sorted(series):
            s = series[sub]
            for k in range(len(s)):
                w.writerow((format_timestamp(s.timestamps[k]), sub, repr(float(s.p_gen_mw[k])),
                            repr(float(s.q_gen_mvar[k])), repr(float(s.p_load_mw[k])),
                            repr(float(s.q_load_mvar[k]))))


def read_substation_csv(path) -> dict[str, SubstationSeries]:
    cols: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != SERIES_HEADER:
            raise MeasurementError("bad substation series header")
        for row in reader:
            cols.setdefault(row[1], []).append(row)
    out = {}
    for sub, rows in cols.items():
        arr = np.array([[float(x) for x in r[2:]] for r in rows])
        out[sub] = SubstationSeries(
            sub,
            np.array([_to_datetime64(parse_timestamp(r[0])) for r in rows], dtype="datetime64[s]"),
            arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
    return out
