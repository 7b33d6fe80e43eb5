"""Day-ahead histories and data-driven scenario generation.

A history is a collection of fully observed past days (per-period bus
loads plus any capacity derates).  Forecasts for a partially observed
day are built by analogy: the k historical days closest to today's
observed prefix — standardized Euclidean distance, channel by channel —
become equiprobable scenarios for the remainder of the day.
"""

from __future__ import annotations

import csv
import dataclasses
import io

import numpy as np

from .model import (
    CaseFormatError,
    Scenario,
    ScenarioSet,
    ValidatedCase,
    ValidationError,
    check_scenarios,
)


@dataclasses.dataclass(frozen=True)
class HistoryDay:
    """One fully observed day."""

    date: str
    load: dict       # bus -> tuple of MW, one per period
    pmax: dict       # gen -> tuple of MW, one per period

    def period_count(self):
        return len(next(iter(self.load.values())))


class HistoryStore:
    """Equal-length observed days, ordered as loaded."""

    def __init__(self, days):
        days = tuple(days)
        if not days:
            raise ValidationError("history has no days")
        counts = {d.period_count() for d in days}
        if len(counts) != 1:
            raise ValidationError(
                f"history days disagree on period count: {sorted(counts)}"
            )
        buses = {tuple(sorted(d.load)) for d in days}
        gens = {tuple(sorted(d.pmax)) for d in days}
        if len(buses) != 1 or len(gens) != 1:
            raise ValidationError("history days disagree on buses or generators")
        seen = set()
        for d in days:
            if d.date in seen:
                raise ValidationError(f"duplicate history date '{d.date}'")
            seen.add(d.date)
            for b, vals in d.load.items():
                if any(v < 0 for v in vals):
                    raise ValidationError(
                        f"history day '{d.date}' has negative load at '{b}'"
                    )
        self.days = days
        self.horizon = days[0].period_count()
        self.buses = tuple(sorted(days[0].load))
        self.gens = tuple(sorted(days[0].pmax))

    def __len__(self):
        return len(self.days)

    def channel_scales(self):
        """Per-channel standard deviations over the whole history.

        Channels with no variation scale to 1 so they drop out of the
        distance without dividing by zero."""
        scales = {}
        for b in self.buses:
            vals = np.array([d.load[b] for d in self.days], dtype=float)
            s = float(vals.std())
            scales[("load", b)] = s if s > 1e-12 else 1.0
        for g in self.gens:
            vals = np.array([d.pmax[g] for d in self.days], dtype=float)
            s = float(vals.std())
            scales[("pmax", g)] = s if s > 1e-12 else 1.0
        return scales


def load_history(text: str, case=None) -> HistoryStore:
    """Parse a history file: day files stacked with a leading date column.

    Layout: ``date,period,load:<bus>,...[,pmax:<gen>,...]`` with one row
    per (date, period).  Periods within each date must be 1..N."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise CaseFormatError("history file: empty")
    header = [h.strip() for h in rows[0]]
    for col in ("date", "period"):
        if col not in header:
            raise CaseFormatError(f"history file: missing '{col}' column")
    date_col = header.index("date")
    period_col = header.index("period")
    load_cols, pmax_cols = {}, {}
    known_buses = known_gens = None
    if case is not None:
        c = case.case if isinstance(case, ValidatedCase) else case
        known_buses = set(c.buses)
        known_gens = {g.id for g in c.generators}
    for i, h in enumerate(header):
        if h in ("date", "period"):
            continue
        if h.startswith("load:"):
            bus = h[5:]
            if known_buses is not None and bus not in known_buses:
                raise CaseFormatError(f"history file: column '{h}' names unknown bus")
            load_cols[bus] = i
        elif h.startswith("pmax:"):
            gid = h[5:]
            if known_gens is not None and gid not in known_gens:
                raise CaseFormatError(
                    f"history file: column '{h}' names unknown generator"
                )
            pmax_cols[gid] = i
        else:
            raise CaseFormatError(f"history file: unrecognized column '{h}'")
    if not load_cols:
        raise CaseFormatError("history file: no load columns")

    by_date = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CaseFormatError(
                f"history file line {lineno}: expected {len(header)} fields"
            )
        date = row[date_col].strip()
        try:
            period = int(row[period_col])
        except ValueError:
            raise CaseFormatError(
                f"history file line {lineno}: bad period '{row[period_col]}'"
            ) from None

        def num(i, what):
            try:
                return float(row[i])
            except ValueError:
                raise CaseFormatError(
                    f"history file line {lineno}: bad {what} value '{row[i]}'"
                ) from None

        bucket = by_date.setdefault(date, {})
        if period in bucket:
            raise CaseFormatError(
                f"history file line {lineno}: duplicate period {period} for '{date}'"
            )
        bucket[period] = (
            {b: num(i, f"load:{b}") for b, i in load_cols.items()},
            {g: num(i, f"pmax:{g}") for g, i in pmax_cols.items()},
        )

    days = []
    for date, bucket in by_date.items():  # insertion order == file order
        expected = list(range(1, len(bucket) + 1))
        if sorted(bucket) != expected:
            raise CaseFormatError(
                f"history file: day '{date}' periods {sorted(bucket)} are not "
                f"1..{len(bucket)}"
            )
        days.append(
            HistoryDay(
                date=date,
                load={b: tuple(bucket[p][0][b] for p in expected) for b in load_cols},
                pmax={g: tuple(bucket[p][1][g] for p in expected) for g in pmax_cols},
            )
        )
    return HistoryStore(days)


def format_history(store: HistoryStore, precision=10) -> str:
    """Render a history back to its file layout."""
    header = (
        ["date", "period"]
        + [f"load:{b}" for b in store.buses]
        + [f"pmax:{g}" for g in store.gens]
    )
    out = [",".join(header)]

    def fmt(x):
        return format(float(x), f".{precision}g")

    for d in store.days:
        for t in range(store.horizon):
            row = [d.date, str(t + 1)]
            row += [fmt(d.load[b][t]) for b in store.buses]
            row += [fmt(d.pmax[g][t]) for g in store.gens]
            out.append(",".join(row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# forecasts


def mean_forecast(scenarios: ScenarioSet) -> ScenarioSet:
    """Collapse a scenario set to its probability-weighted point forecast."""
    check_scenarios(scenarios)
    buses = sorted({b for s in scenarios.scenarios for b in s.load})
    gens = sorted({g for s in scenarios.scenarios for g in s.pmax_override})
    load = {}
    for b in buses:
        acc = np.zeros(scenarios.horizon)
        for s in scenarios.scenarios:
            acc += s.prob * np.asarray(s.load[b], dtype=float)
        load[b] = tuple(float(v) for v in acc)
    pmax = {}
    for g in gens:
        acc = np.zeros(scenarios.horizon)
        for s in scenarios.scenarios:
            acc += s.prob * np.asarray(s.pmax_override[g], dtype=float)
        pmax[g] = tuple(float(v) for v in acc)
    return ScenarioSet(
        scenarios=(Scenario(id="mean", prob=1.0, load=load, pmax_override=pmax),),
        horizon=scenarios.horizon,
    )


def knn_scenarios(store: HistoryStore, observed_load, k=10,
                  observed_pmax=None) -> ScenarioSet:
    """Scenario set from the k nearest historical days.

    ``observed_load`` maps each bus to today's observed prefix (equal
    lengths, at least one period).  Distance is Euclidean over the
    prefix after dividing each channel by its whole-history standard
    deviation; ties break toward the earlier day in the history.  The
    selected days' *full* trajectories become scenarios with probability
    1/k, so the future inherits realistic intra-day shape."""
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    if k > len(store):
        raise ValidationError(
            f"k={k} exceeds the {len(store)} days of history"
        )
    if set(observed_load) != set(store.buses):
        raise ValidationError("observed prefix does not cover the history's buses")
    lengths = {len(v) for v in observed_load.values()}
    if len(lengths) != 1:
        raise ValidationError("observed prefix has ragged lengths")
    n_obs = lengths.pop()
    if n_obs < 1:
        raise ValidationError("observed prefix is empty")
    if n_obs > store.horizon:
        raise ValidationError(
            f"observed prefix of {n_obs} periods exceeds the history horizon "
            f"{store.horizon}"
        )
    observed_pmax = observed_pmax or {}
    for g in observed_pmax:
        if g not in store.gens:
            raise ValidationError(f"observed pmax for '{g}' not tracked by the history")

    scales = store.channel_scales()
    dist2 = np.zeros(len(store))
    for i, day in enumerate(store.days):
        acc = 0.0
        for b in store.buses:
            s = scales[("load", b)]
            hist = np.asarray(day.load[b][:n_obs], dtype=float)
            obs = np.asarray(observed_load[b], dtype=float)
            acc += float(np.sum(((hist - obs) / s) ** 2))
        for g, vals in observed_pmax.items():
            s = scales[("pmax", g)]
            hist = np.asarray(day.pmax[g][: len(vals)], dtype=float)
            obs = np.asarray(vals, dtype=float)
            acc += float(np.sum(((hist - obs) / s) ** 2))
        dist2[i] = acc
    order = np.argsort(dist2, kind="stable")  # stable: ties keep history order
    chosen = order[:k]
    prob = 1.0 / k
    scens = tuple(
        Scenario(
            id=store.days[i].date,
            prob=prob,
            load=dict(store.days[i].load),
            pmax_override=dict(store.days[i].pmax),
        )
        for i in chosen
    )
    return ScenarioSet(scenarios=scens, horizon=store.horizon)
