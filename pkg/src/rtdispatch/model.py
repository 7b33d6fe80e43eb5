"""Core data model: system cases, scenario sets, dispatch state and solutions.

A SystemCase is the static description of the market footprint (buses,
generators with piecewise-linear bids, transmission sensitivities, reserve
requirements, penalty prices).  Time-varying data — per-bus demand and
per-generator capacity derates — lives in ScenarioSet objects parsed from
delimited day files.  Everything downstream (model builders, the rolling
simulator, the CLI) consumes only these types.

Monetary convention: every price in the model is $/MWh and a period of
``step_minutes`` minutes contributes ``price * step_minutes / 60`` dollars
per MW, so costs are exact dollar amounts per period.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

RESERVE_PRODUCTS = ("reg", "spin", "supp_on", "supp_off")

#: tolerance used when checking that bid segments tile [pmin, pmax]
SEGMENT_WIDTH_TOL = 1e-6
#: PTDF entries may slightly exceed 1 in magnitude due to upstream rounding
PTDF_MAG_TOL = 1e-6
PROB_SUM_TOL = 1e-9


class CaseFormatError(ValueError):
    """Raised when a case or day file is structurally malformed.

    The message always names the offending path or column so the file can
    be fixed without reading the parser.
    """


class ValidationError(ValueError):
    """Raised when well-formed input violates a model invariant."""


def _flag_profile(value):
    """Normalize a commitment/availability flag to a tuple of bools.

    Accepts a single bool (constant profile) or a sequence of bools; a
    sequence shorter than the day is extended by repeating its last entry.
    """
    if isinstance(value, bool):
        return (value,)
    seq = tuple(bool(v) for v in value)
    if not seq:
        raise CaseFormatError("flag profile must not be empty")
    return seq


def _flag_at(profile, t):
    return profile[min(t, len(profile) - 1)]


@dataclass(frozen=True)
class Generator:
    """One dispatchable resource (or a priced import injection).

    ``segments`` is the incremental energy bid: (width MW, price $/MWh)
    blocks above ``pmin``, nondecreasing in price, tiling [pmin, pmax].
    Ramp rates are MW per minute.  ``reserve_caps`` / ``reserve_prices``
    cover regulating, spinning, supplemental-online and supplemental-
    offline products; a zero cap disables the product.  Flag profiles are
    per-period (scalar bool means constant for the day).
    """

    id: str
    bus: str
    pmin: float
    pmax: float
    initial_output: float
    ramp_up: float
    ramp_down: float
    segments: tuple[tuple[float, float], ...]
    no_load_cost: float = 0.0
    reserve_caps: dict = field(default_factory=dict)
    reserve_prices: dict = field(default_factory=dict)
    commit: tuple = (True,)
    regulation: tuple = (True,)
    ra_reg: tuple = (True,)
    ra_spin: tuple = (True,)
    ra_s_on: tuple = (True,)
    ra_s_off: tuple = (True,)
    is_import: bool = False

    def cap(self, product):
        return float(self.reserve_caps.get(product, 0.0))

    def price(self, product):
        return float(self.reserve_prices.get(product, 0.0))

    def committed(self, t):
        return _flag_at(self.commit, t)

    def reg_eligible(self, t):
        """Regulation needs the product flag, availability and commitment."""
        return (
            self.committed(t)
            and _flag_at(self.regulation, t)
            and _flag_at(self.ra_reg, t)
            and self.cap("reg") > 0.0
        )

    def spin_eligible(self, t):
        return self.committed(t) and _flag_at(self.ra_spin, t) and self.cap("spin") > 0.0

    def supp_on_eligible(self, t):
        return self.committed(t) and _flag_at(self.ra_s_on, t) and self.cap("supp_on") > 0.0

    def supp_off_eligible(self, t):
        """Supplemental-offline is carried by resources that are NOT committed."""
        return (
            not self.committed(t)
            and _flag_at(self.ra_s_off, t)
            and self.cap("supp_off") > 0.0
        )

    def energy_cost(self, mw, t=0):
        """Dollar-per-hour bid cost of producing ``mw``, merit-order fill.

        Output below pmin is priced at the first segment's rate (only
        reachable transiently through penalized slack, never at optimum).
        """
        if not self.committed(t):
            return 0.0
        above = mw - self.pmin
        cost = 0.0
        if above < 0.0:
            return above * self.segments[0][1] if self.segments else 0.0
        for width, price in self.segments:
            take = min(above, width)
            if take <= 0.0:
                break
            cost += take * price
            above -= take
        if above > 0.0 and self.segments:
            cost += above * self.segments[-1][1]
        return cost


@dataclass(frozen=True)
class Branch:
    """A monitored flowgate: linear injection sensitivities and MW limits."""

    id: str
    ptdf: dict
    limit_lo: float
    limit_hi: float
    violation_price: float
    monitored: bool = True


@dataclass(frozen=True)
class PenaltyPrices:
    """$/MWh prices on constraint-relaxation slack.

    ``shortage``/``surplus`` price the system energy-balance slack,
    the rest price reserve-requirement shortfall by product tier.
    """

    shortage: float
    surplus: float
    reg: float
    rspin: float
    op: float


@dataclass(frozen=True)
class ReserveRequirements:
    """System-wide MW requirements; constant across the day by construction."""

    reg: float
    rspin: float
    op: float


@dataclass(frozen=True)
class SystemCase:
    name: str
    buses: tuple
    generators: tuple
    branches: tuple
    reserve_req: ReserveRequirements
    penalties: PenaltyPrices
    step_minutes: float = 5.0
    base_mva: float = 100.0

    @property
    def hours_per_step(self):
        return self.step_minutes / 60.0

    def generator(self, gid):
        for g in self.generators:
            if g.id == gid:
                return g
        raise KeyError(gid)


class ValidatedCase:
    """A SystemCase whose invariants have been checked.

    Model builders require this wrapper so an unvalidated case cannot reach
    the LP layer.  It also carries the index maps everything downstream
    needs (bus/generator order is the case-file order).
    """

    def __init__(self, case: SystemCase):
        self.case = case
        self.bus_index = {b: i for i, b in enumerate(case.buses)}
        self.gen_index = {g.id: i for i, g in enumerate(case.generators)}
        self.branch_index = {e.id: i for i, e in enumerate(case.branches)}

    def __getattr__(self, name):
        return getattr(self.case, name)

    def __repr__(self):
        return f"ValidatedCase({self.case.name!r})"


@dataclass(frozen=True)
class Scenario:
    """One probability-weighted trajectory of demand and capacity derates."""

    id: str
    prob: float
    load: dict  # bus -> tuple of MW, one entry per period
    pmax_override: dict = field(default_factory=dict)  # gen -> tuple of MW


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple
    horizon: int

    @property
    def n_scenarios(self):
        return len(self.scenarios)

    def window(self, start, length):
        """Slice periods [start, start+length) out of every scenario.

        The window is truncated at the horizon; at least one period must
        remain.
        """
        if not 0 <= start < self.horizon:
            raise ValueError(f"window start {start} outside horizon {self.horizon}")
        length = min(length, self.horizon - start)
        sliced = tuple(
            replace(
                s,
                load={b: v[start : start + length] for b, v in s.load.items()},
                pmax_override={
                    g: v[start : start + length] for g, v in s.pmax_override.items()
                },
            )
            for s in self.scenarios
        )
        return ScenarioSet(scenarios=sliced, horizon=length)

    def with_period_data(self, t, load_map, pmax_map=None):
        """Overwrite period ``t`` of every scenario with common realized data.

        Used by the rolling simulator: the first period of any look-ahead
        window is current telemetry, identical across scenarios.
        """
        out = []
        for s in self.scenarios:
            load = {
                b: v[:t] + (float(load_map[b]),) + v[t + 1 :] for b, v in s.load.items()
            }
            pmax = s.pmax_override
            if pmax_map:
                pmax = dict(pmax)
                for g, val in pmax_map.items():
                    base = pmax.get(g)
                    if base is None:
                        continue
                    pmax[g] = base[:t] + (float(val),) + base[t + 1 :]
            out.append(replace(s, load=load, pmax_override=pmax))
        return ScenarioSet(scenarios=tuple(out), horizon=self.horizon)

    def period_load(self, s_idx, t):
        sc = self.scenarios[s_idx]
        return {b: v[t] for b, v in sc.load.items()}

    def total_load(self, s_idx, t):
        return sum(v[t] for v in self.scenarios[s_idx].load.values())


@dataclass(frozen=True)
class SystemState:
    """Coupling state between consecutive dispatch intervals."""

    prev_dispatch: dict  # gen id -> MW at the end of the previous period
    wall_clock: int = 0  # 0-based index of the period about to be dispatched


def initial_state(case) -> SystemState:
    case = case.case if isinstance(case, ValidatedCase) else case
    return SystemState(
        prev_dispatch={g.id: g.initial_output for g in case.generators}, wall_clock=0
    )


@dataclass
class DispatchSolution:
    """Solved dispatch over a (periods x scenarios) window.

    Keys are (gen_id, t, s) with t a window-local 0-based period and s the
    scenario position; slack fields are keyed (t, s) and flow fields
    (branch_id, t, s).  ``first_period`` records the absolute day period of
    window period 0 so costs can be itemized with the right flags.
    """

    periods: int
    scenario_ids: tuple
    probs: tuple
    first_period: int
    pg: dict
    reserve: dict  # (product, gen_id, t, s) -> MW
    shortage: dict
    surplus: dict
    short_reg: dict
    short_rspin: dict
    short_op: dict
    flow: dict
    flow_excess: dict
    objective: float

    def pg_at(self, gid, t, s=0):
        return self.pg.get((gid, t, s), 0.0)

    def reserve_at(self, product, gid, t, s=0):
        """Reserve award; eligibility gaps read as zero."""
        return self.reserve.get((product, gid, t, s), 0.0)

    def first_stage_pg(self):
        return {g: v for (g, t, s), v in self.pg.items() if t == 0 and s == 0}

    def first_stage_reserve(self, product):
        return {
            g: v
            for (p, g, t, s), v in self.reserve.items()
            if p == product and t == 0 and s == 0
        }

    def binding(self):
        """The physically committed slice: period-0, scenario-0 quantities."""
        res = {}
        for product in RESERVE_PRODUCTS:
            for g, v in self.first_stage_reserve(product).items():
                res.setdefault(g, {})[product] = v
        return {
            "pg": self.first_stage_pg(),
            "reserve": res,
        }


# ---------------------------------------------------------------------------
# case parsing


_MISSING = object()


def _want(mapping, key, kind, path, default=_MISSING):
    if key not in mapping:
        if default is not _MISSING:
            return default
        raise CaseFormatError(f"{path}: missing required field '{key}'")
    val = mapping[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise CaseFormatError(f"{path}.{key}: expected number, got {type(val).__name__}")
        return float(val)
    if kind is not None and not isinstance(val, kind):
        raise CaseFormatError(
            f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}"
        )
    return val


def _parse_flag(raw, path):
    if isinstance(raw, bool):
        return (raw,)
    if isinstance(raw, list):
        if not raw or not all(isinstance(v, bool) for v in raw):
            raise CaseFormatError(f"{path}: expected bool or list of bool")
        return tuple(raw)
    raise CaseFormatError(f"{path}: expected bool or list of bool")


def _parse_generator(raw, i):
    path = f"generators[{i}]"
    if not isinstance(raw, dict):
        raise CaseFormatError(f"{path}: expected object")
    segments = _want(raw, "segments", list, path)
    segs = []
    for k, seg in enumerate(segments):
        spath = f"{path}.segments[{k}]"
        if not isinstance(seg, dict):
            raise CaseFormatError(f"{spath}: expected object")
        segs.append((_want(seg, "width", float, spath), _want(seg, "price", float, spath)))
    caps = _want(raw, "reserve_caps", dict, path, default={})
    prices = _want(raw, "reserve_prices", dict, path, default={})
    for d, dpath in ((caps, "reserve_caps"), (prices, "reserve_prices")):
        for key in d:
            if key not in RESERVE_PRODUCTS:
                raise CaseFormatError(f"{path}.{dpath}.{key}: unknown reserve product")
    flags = _want(raw, "flags", dict, path, default={})
    for key in flags:
        if key not in ("commit", "regulation", "ra_reg", "ra_spin", "ra_s_on", "ra_s_off"):
            raise CaseFormatError(f"{path}.flags.{key}: unknown flag")

    def flag(name):
        if name not in flags:
            return (True,)
        return _parse_flag(flags[name], f"{path}.flags.{name}")

    return Generator(
        id=_want(raw, "id", str, path),
        bus=_want(raw, "bus", str, path),
        pmin=_want(raw, "pmin", float, path),
        pmax=_want(raw, "pmax", float, path),
        initial_output=_want(raw, "initial_output", float, path, default=0.0),
        ramp_up=_want(raw, "ramp_up", float, path),
        ramp_down=_want(raw, "ramp_down", float, path),
        segments=tuple(segs),
        no_load_cost=_want(raw, "no_load_cost", float, path, default=0.0),
        reserve_caps={k: float(v) for k, v in caps.items()},
        reserve_prices={k: float(v) for k, v in prices.items()},
        commit=flag("commit"),
        regulation=flag("regulation"),
        ra_reg=flag("ra_reg"),
        ra_spin=flag("ra_spin"),
        ra_s_on=flag("ra_s_on"),
        ra_s_off=flag("ra_s_off"),
        is_import=bool(raw.get("is_import", False)),
    )


def _parse_branch(raw, i):
    path = f"branches[{i}]"
    if not isinstance(raw, dict):
        raise CaseFormatError(f"{path}: expected object")
    ptdf_raw = _want(raw, "ptdf", dict, path)
    ptdf = {}
    for bus, coef in ptdf_raw.items():
        if isinstance(coef, bool) or not isinstance(coef, (int, float)):
            raise CaseFormatError(f"{path}.ptdf.{bus}: expected number")
        ptdf[bus] = float(coef)
    return Branch(
        id=_want(raw, "id", str, path),
        ptdf=ptdf,
        limit_lo=_want(raw, "limit_lo", float, path),
        limit_hi=_want(raw, "limit_hi", float, path),
        violation_price=_want(raw, "violation_price", float, path),
        monitored=bool(raw.get("monitored", True)),
    )


def parse_case(text: str) -> SystemCase:
    """Parse a JSON case document into a SystemCase.

    Structural problems raise CaseFormatError naming the offending path;
    semantic problems (duplicate ids, unknown bus references) raise
    ValidationError.  The returned case is not yet validated — run it
    through validate_case before building models.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"<root>: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise CaseFormatError("<root>: expected object")
    buses = _want(doc, "buses", list, "<root>")
    for i, b in enumerate(buses):
        if not isinstance(b, str):
            raise CaseFormatError(f"buses[{i}]: expected string")
    gens = tuple(
        _parse_generator(raw, i) for i, raw in enumerate(_want(doc, "generators", list, "<root>"))
    )
    branches = tuple(
        _parse_branch(raw, i)
        for i, raw in enumerate(_want(doc, "branches", list, "<root>", default=[]))
    )
    req_raw = _want(doc, "reserve_req", dict, "<root>", default={})
    for key in req_raw:
        if key not in ("reg", "rspin", "op"):
            raise CaseFormatError(f"reserve_req.{key}: unknown reserve tier")
    req = ReserveRequirements(
        reg=_want(req_raw, "reg", float, "reserve_req", default=0.0),
        rspin=_want(req_raw, "rspin", float, "reserve_req", default=0.0),
        op=_want(req_raw, "op", float, "reserve_req", default=0.0),
    )
    pen_raw = _want(doc, "penalties", dict, "<root>")
    shortage = _want(pen_raw, "shortage", float, "penalties")
    penalties = PenaltyPrices(
        shortage=shortage,
        surplus=_want(pen_raw, "surplus", float, "penalties", default=shortage),
        reg=_want(pen_raw, "reg", float, "penalties", default=0.0),
        rspin=_want(pen_raw, "rspin", float, "penalties", default=0.0),
        op=_want(pen_raw, "op", float, "penalties", default=0.0),
    )
    case = SystemCase(
        name=_want(doc, "name", str, "<root>", default="case"),
        buses=tuple(buses),
        generators=gens,
        branches=branches,
        reserve_req=req,
        penalties=penalties,
        step_minutes=_want(doc, "step_minutes", float, "<root>", default=5.0),
        base_mva=_want(doc, "base_mva", float, "<root>", default=100.0),
    )
    _check_ids(case)
    return case


def _check_ids(case):
    """Duplicate-id and dangling-reference checks shared by parse and validate."""
    seen = set()
    for b in case.buses:
        if b in seen:
            raise ValidationError(f"duplicate bus id '{b}'")
        seen.add(b)
    seen = set()
    for g in case.generators:
        if g.id in seen:
            raise ValidationError(f"duplicate generator id '{g.id}'")
        seen.add(g.id)
        if g.bus not in case.buses:
            raise ValidationError(f"generator '{g.id}' references unknown bus '{g.bus}'")
    seen = set()
    for e in case.branches:
        if e.id in seen:
            raise ValidationError(f"duplicate branch id '{e.id}'")
        seen.add(e.id)
        for bus in e.ptdf:
            if bus not in case.buses:
                raise ValidationError(f"branch '{e.id}' references unknown bus '{bus}'")


def serialize_case(case: SystemCase) -> str:
    """Render a SystemCase back to its JSON document form.

    parse_case(serialize_case(c)) == c for any valid case; flag profiles
    serialize as a scalar when constant.
    """

    def flag_out(profile):
        return profile[0] if len(profile) == 1 else list(profile)

    doc = {
        "name": case.name,
        "step_minutes": case.step_minutes,
        "base_mva": case.base_mva,
        "buses": list(case.buses),
        "reserve_req": {
            "reg": case.reserve_req.reg,
            "rspin": case.reserve_req.rspin,
            "op": case.reserve_req.op,
        },
        "penalties": {
            "shortage": case.penalties.shortage,
            "surplus": case.penalties.surplus,
            "reg": case.penalties.reg,
            "rspin": case.penalties.rspin,
            "op": case.penalties.op,
        },
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "pmin": g.pmin,
                "pmax": g.pmax,
                "initial_output": g.initial_output,
                "ramp_up": g.ramp_up,
                "ramp_down": g.ramp_down,
                "segments": [{"width": w, "price": p} for w, p in g.segments],
                "no_load_cost": g.no_load_cost,
                "reserve_caps": dict(g.reserve_caps),
                "reserve_prices": dict(g.reserve_prices),
                "flags": {
                    "commit": flag_out(g.commit),
                    "regulation": flag_out(g.regulation),
                    "ra_reg": flag_out(g.ra_reg),
                    "ra_spin": flag_out(g.ra_spin),
                    "ra_s_on": flag_out(g.ra_s_on),
                    "ra_s_off": flag_out(g.ra_s_off),
                },
                "is_import": g.is_import,
            }
            for g in case.generators
        ],
        "branches": [
            {
                "id": e.id,
                "ptdf": dict(e.ptdf),
                "limit_lo": e.limit_lo,
                "limit_hi": e.limit_hi,
                "violation_price": e.violation_price,
                "monitored": e.monitored,
            }
            for e in case.branches
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def validate_case(case: SystemCase) -> ValidatedCase:
    """Check every model invariant; raise ValidationError listing all failures."""
    problems = []
    _collect = problems.append
    try:
        _check_ids(case)
    except ValidationError as exc:
        _collect(str(exc))
    if case.step_minutes <= 0:
        _collect(f"step_minutes must be positive, got {case.step_minutes}")
    if not case.buses:
        _collect("case has no buses")
    for g in case.generators:
        gid = g.id
        if not 0.0 <= g.pmin <= g.pmax:
            _collect(f"generator '{gid}': need 0 <= pmin <= pmax, got [{g.pmin}, {g.pmax}]")
        if not 0.0 <= g.initial_output <= g.pmax + 1e-9:
            _collect(f"generator '{gid}': initial_output {g.initial_output} outside [0, pmax]")
        if g.ramp_up <= 0 or g.ramp_down <= 0:
            _collect(f"generator '{gid}': ramp rates must be positive")
        if g.no_load_cost < 0:
            _collect(f"generator '{gid}': no_load_cost must be nonnegative")
        widths = sum(w for w, _ in g.segments)
        span = g.pmax - g.pmin
        if abs(widths - span) > SEGMENT_WIDTH_TOL * max(1.0, span):
            _collect(
                f"generator '{gid}': segment widths sum to {widths}, expected pmax-pmin={span}"
            )
        last = -math.inf
        for k, (w, p) in enumerate(g.segments):
            if w < 0:
                _collect(f"generator '{gid}': segment[{k}] width {w} negative")
            if p < last:
                _collect(f"generator '{gid}': segment prices must be nondecreasing")
            last = max(last, p)
        for product in RESERVE_PRODUCTS:
            if g.cap(product) < 0:
                _collect(f"generator '{gid}': reserve cap '{product}' negative")
            if g.price(product) < 0:
                _collect(f"generator '{gid}': reserve price '{product}' negative")
    for e in case.branches:
        if e.limit_lo > e.limit_hi:
            _collect(f"branch '{e.id}': limit_lo {e.limit_lo} > limit_hi {e.limit_hi}")
        if e.violation_price < 0:
            _collect(f"branch '{e.id}': violation_price must be nonnegative")
        for bus, coef in e.ptdf.items():
            if abs(coef) > 1.0 + PTDF_MAG_TOL:
                _collect(f"branch '{e.id}': |ptdf[{bus}]| = {abs(coef)} exceeds 1")
    for tier in ("reg", "rspin", "op"):
        if getattr(case.reserve_req, tier) < 0:
            _collect(f"reserve_req.{tier} must be nonnegative")
    for fieldname in ("shortage", "surplus", "reg", "rspin", "op"):
        if getattr(case.penalties, fieldname) < 0:
            _collect(f"penalties.{fieldname} must be nonnegative")
    if problems:
        raise ValidationError("; ".join(problems))
    return ValidatedCase(case)


# ---------------------------------------------------------------------------
# day / scenario files


def parse_timeseries(text: str, case) -> ScenarioSet:
    """Parse a delimited day file into a ScenarioSet.

    Layout: header ``period,scenario,prob,load:<bus>,...,pmax:<gen>,...``
    then one row per (period, scenario).  The scenario and prob columns may
    be omitted for deterministic files (single scenario, probability 1).
    Every bus in the case needs a load column; pmax columns are optional
    and name the generators they derate.
    """
    case = case.case if isinstance(case, ValidatedCase) else case
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise CaseFormatError("day file: empty")
    header = [h.strip() for h in rows[0]]
    try:
        period_col = header.index("period")
    except ValueError:
        raise CaseFormatError("day file: missing 'period' column") from None
    scen_col = header.index("scenario") if "scenario" in header else None
    prob_col = header.index("prob") if "prob" in header else None
    if (scen_col is None) != (prob_col is None):
        raise CaseFormatError("day file: 'scenario' and 'prob' columns must appear together")
    load_cols, pmax_cols = {}, {}
    for i, h in enumerate(header):
        if h in ("period", "scenario", "prob", "date"):
            continue
        if h.startswith("load:"):
            bus = h[5:]
            if bus not in case.buses:
                raise CaseFormatError(f"day file: column '{h}' names unknown bus")
            load_cols[bus] = i
        elif h.startswith("pmax:"):
            gid = h[5:]
            if gid not in {g.id for g in case.generators}:
                raise CaseFormatError(f"day file: column '{h}' names unknown generator")
            pmax_cols[gid] = i
        else:
            raise CaseFormatError(f"day file: unrecognized column '{h}'")
    missing = [b for b in case.buses if b not in load_cols]
    if missing:
        raise CaseFormatError(f"day file: no load column for bus '{missing[0]}'")

    per_scen = {}  # scenario id -> {period -> (prob, loads, pmaxes)}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CaseFormatError(f"day file line {lineno}: expected {len(header)} fields")
        try:
            period = int(row[period_col])
        except ValueError:
            raise CaseFormatError(f"day file line {lineno}: bad period '{row[period_col]}'") from None
        sid = row[scen_col].strip() if scen_col is not None else "s1"
        try:
            prob = float(row[prob_col]) if prob_col is not None else 1.0
        except ValueError:
            raise CaseFormatError(f"day file line {lineno}: bad prob '{row[prob_col]}'") from None

        def num(i, what):
            try:
                return float(row[i])
            except ValueError:
                raise CaseFormatError(
                    f"day file line {lineno}: bad {what} value '{row[i]}'"
                ) from None

        loads = {b: num(i, f"load:{b}") for b, i in load_cols.items()}
        pmaxes = {g: num(i, f"pmax:{g}") for g, i in pmax_cols.items()}
        bucket = per_scen.setdefault(sid, {})
        if period in bucket:
            raise CaseFormatError(f"day file line {lineno}: duplicate period {period} in scenario '{sid}'")
        bucket[period] = (prob, loads, pmaxes)

    horizons = {len(b) for b in per_scen.values()}
    if len(horizons) != 1:
        raise CaseFormatError("day file: scenarios cover different numbers of periods")
    horizon = horizons.pop()
    scenarios = []
    for sid in per_scen:  # insertion order == file order
        bucket = per_scen[sid]
        expected = list(range(1, horizon + 1))
        if sorted(bucket) != expected:
            raise CaseFormatError(
                f"day file: scenario '{sid}' periods {sorted(bucket)} are not 1..{horizon}"
            )
        probs = {bucket[p][0] for p in bucket}
        if len(probs) != 1:
            raise CaseFormatError(f"day file: scenario '{sid}' rows disagree on prob")
        prob = probs.pop()
        load = {
            b: tuple(bucket[p][1][b] for p in expected) for b in load_cols
        }
        pmax = {
            g: tuple(bucket[p][2][g] for p in expected) for g in pmax_cols
        }
        scenarios.append(Scenario(id=sid, prob=prob, load=load, pmax_override=pmax))
    ss = ScenarioSet(scenarios=tuple(scenarios), horizon=horizon)
    check_scenarios(ss, case)
    return ss


def check_scenarios(ss: ScenarioSet, case=None):
    """Validate scenario-set invariants (and cross-check against a case)."""
    if not ss.scenarios:
        raise ValidationError("scenario set is empty")
    total = sum(s.prob for s in ss.scenarios)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValidationError(f"scenario probabilities sum to {total}, expected 1")
    for s in ss.scenarios:
        if s.prob <= 0:
            raise ValidationError(f"scenario '{s.id}' has nonpositive probability {s.prob}")
        for b, vals in s.load.items():
            if len(vals) != ss.horizon:
                raise ValidationError(f"scenario '{s.id}' load for '{b}' has wrong length")
            if any(v < 0 for v in vals):
                raise ValidationError(f"scenario '{s.id}' has negative load at bus '{b}'")
        for g, vals in s.pmax_override.items():
            if len(vals) != ss.horizon:
                raise ValidationError(f"scenario '{s.id}' pmax for '{g}' has wrong length")
    if case is not None:
        case = case.case if isinstance(case, ValidatedCase) else case
        gens = {g.id: g for g in case.generators}
        for s in ss.scenarios:
            for gid, vals in s.pmax_override.items():
                g = gens[gid]
                for t, v in enumerate(vals):
                    if v < g.pmin - 1e-9:
                        raise ValidationError(
                            f"scenario '{s.id}' pmax override for '{gid}' at period {t + 1} "
                            f"is {v}, below pmin {g.pmin}"
                        )
    return ss


def format_timeseries(ss: ScenarioSet, precision=10) -> str:
    """Render a ScenarioSet back to the delimited day-file layout."""
    buses = sorted({b for s in ss.scenarios for b in s.load})
    gens = sorted({g for s in ss.scenarios for g in s.pmax_override})
    single = len(ss.scenarios) == 1 and ss.scenarios[0].prob == 1.0
    header = ["period"] + ([] if single else ["scenario", "prob"])
    header += [f"load:{b}" for b in buses] + [f"pmax:{g}" for g in gens]
    out = [",".join(header)]

    def fmt(x):
        return format(float(x), f".{precision}g")

    for s in ss.scenarios:
        for t in range(ss.horizon):
            row = [str(t + 1)] + ([] if single else [s.id, fmt(s.prob)])
            row += [fmt(s.load[b][t]) for b in buses]
            row += [fmt(s.pmax_override[g][t]) for g in gens]
            out.append(",".join(row))
    return "\n".join(out) + "\n"
