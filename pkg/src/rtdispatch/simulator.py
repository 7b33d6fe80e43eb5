"""Rolling five-minute dispatch simulation over one realized day.

Every policy is run through the same loop: at each period the policy
sees current telemetry plus whatever forecast it is entitled to, commits
its first-period dispatch, and that commitment is settled against the
realized demand through one shared settlement model.  Costs are only
ever accumulated from settled slices, so policies differ in nothing but
the information they use — the comparisons stay fair by construction.

Policies:

* ``sced``  — single-period dispatch, no look-ahead;
* ``lad``   — deterministic look-ahead on a point forecast;
* ``slad``  — stochastic look-ahead solved by decomposition;
* ``plad``  — look-ahead on the realized future (clairvoyant, truncated);
* ``pd``    — one full-day plan on the realized day, replayed slice by
  slice: the hindsight-optimal benchmark.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from .benders import BendersConfig, run_benders
from .forecast import HistoryStore, knn_scenarios, mean_forecast
from .formulation import (
    CostBreakdown,
    build_lad,
    build_sced,
    extract_dispatch,
    first_stage_keys,
    first_stage_values,
    itemize_costs,
)
from .lp import LPOptions, solve_lp
from .model import (
    Scenario,
    ScenarioSet,
    SystemState,
    ValidatedCase,
    ValidationError,
    initial_state,
)

POLICY_KINDS = ("sced", "lad", "slad", "plad", "pd")


class SimulationError(RuntimeError):
    """A dispatch model failed mid-day; the message names the period."""


class IterationLimit(SimulationError):
    """The decomposition ran out of iterations before closing its gap."""


@dataclasses.dataclass
class PolicySpec:
    """What a policy is allowed to know and how it plans.

    ``scenarios`` is a day-long scenario set aligned with the actual day
    (same horizon); ``history`` generates scenarios by nearest neighbors
    on the observed prefix instead.  With neither, look-ahead policies
    fall back to a persistence forecast (current telemetry held flat).
    Capacity derates are forecast only for the generators the source
    tracks; settlement always uses realized capacity.
    """

    kind: str
    horizon: int = 12
    scenarios: ScenarioSet | None = None
    history: HistoryStore | None = None
    knn_k: int = 10
    benders: BendersConfig = dataclasses.field(default_factory=BendersConfig)
    lp: LPOptions = dataclasses.field(default_factory=LPOptions)
    flows: str = "full"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError(
                f"unknown policy '{self.kind}'; expected one of {POLICY_KINDS}"
            )
        if self.kind == "sced":
            self.horizon = 1
        if self.horizon < 1:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")


@dataclasses.dataclass(frozen=True)
class StepRecord:
    period: int                 # absolute day period, 0-based
    cost: float                 # settled cost of this slice, $
    breakdown: CostBreakdown
    pg: dict                    # gen id -> committed MW
    reserve: dict               # (product, gen id) -> committed MW
    shortage: float             # settled unserved energy, MW
    surplus: float
    flow_excess: float          # total settled flowgate excess, MW
    available_mw: float         # deliverable headroom entering the period
    available_fast_mw: float
    planning_objective: float   # the look-ahead model's objective
    solve_ms: float
    benders_iterations: int = 0


@dataclasses.dataclass
class SimulationLog:
    case_name: str
    policy: str
    horizon: int
    periods: int
    steps: tuple
    totals: CostBreakdown

    @property
    def total_cost(self):
        return self.totals.total


def _check_actuals(actuals):
    if actuals.n_scenarios != 1:
        raise ValidationError("the realized day must be a single-scenario set")
    return actuals


def _realized_at(actuals, t):
    sc = actuals.scenarios[0]
    load = {b: float(v[t]) for b, v in sc.load.items()}
    pmax = {g: float(v[t]) for g, v in sc.pmax_override.items()}
    return load, pmax


def _persistence_window(case, load, pmax, length):
    scen = Scenario(
        id="hold",
        prob=1.0,
        load={b: (load[b],) * length for b in case.buses},
        pmax_override={g: (v,) * length for g, v in pmax.items()},
    )
    return ScenarioSet(scenarios=(scen,), horizon=length)


def settle_first_period(vc, state, load, pmax, x1, lp_opts=None, flows="full"):
    """Price a committed first stage against the realized period.

    The commitment is pinned into a single-period model; demand imbalance
    and reserve shortfalls land on the priced slacks.  Returns the
    extracted dispatch and its cost breakdown."""
    if not isinstance(vc, ValidatedCase):
        raise TypeError("settlement requires a ValidatedCase")
    case = vc.case
    lp, vmap = build_sced(vc, state, load, pmax=pmax, flows=flows)
    pins = []
    for kind, gid in first_stage_keys(case):
        want = max(0.0, float(x1.get((kind, gid), 0.0)))
        g = case.generators[vc.gen_index[gid]]
        if kind == "pg" and not g.committed(state.wall_clock):
            if want > 1e-7:
                raise SimulationError(
                    f"period {state.wall_clock}: committed {want:.4g} MW on "
                    f"'{gid}', which is off-line this period"
                )
            continue  # pg is fixed at zero; nothing to pin
        col = vmap.get((kind, gid, 0, 0))
        if col is None:
            if want > 1e-7:
                raise SimulationError(
                    f"period {state.wall_clock}: committed {want:.4g} MW of "
                    f"'{kind}' on '{gid}', which is not eligible this period"
                )
            continue
        pins.append(([col], [1.0], "=", want, f"settle_{kind}({gid})"))
    pinned = lp.with_rows(pins)
    sol = solve_lp(pinned, lp_opts)
    if sol.status != "optimal":
        raise SimulationError(
            f"period {state.wall_clock}: settlement came back '{sol.status}'"
        )
    d = extract_dispatch(sol, vmap)
    return d, itemize_costs(d, case)


def _forecast_window(vc, policy, actuals, t, length):
    """The scenario window a policy sees at period t (period 0 realized)."""
    case = vc.case
    load, pmax = _realized_at(actuals, t)
    if policy.scenarios is not None:
        win = policy.scenarios.window(t, length)
    elif policy.history is not None:
        sc = actuals.scenarios[0]
        obs_load = {b: sc.load[b][: t + 1] for b in case.buses}
        obs_pmax = {
            g: vals[: t + 1]
            for g, vals in sc.pmax_override.items()
            if g in policy.history.gens
        }
        full = knn_scenarios(
            policy.history, obs_load, k=policy.knn_k, observed_pmax=obs_pmax
        )
        win = full.window(t, length)
    else:
        win = _persistence_window(case, load, pmax, length)
    return win.with_period_data(0, load, pmax)


def _plan_step(vc, state, policy, actuals, t, length):
    """Choose the period-t commitment; returns (x1, objective, iters)."""
    load, pmax = _realized_at(actuals, t)

    if policy.kind == "sced" or length == 1:
        lp, vmap = build_sced(vc, state, load, pmax=pmax, flows=policy.flows)
        sol = solve_lp(lp, policy.lp)
        if sol.status != "optimal":
            raise SimulationError(f"period {t}: dispatch came back '{sol.status}'")
        return first_stage_values(sol, vmap), float(sol.objective), 0

    if policy.kind == "plad":
        win = actuals.window(t, length)
    else:
        win = _forecast_window(vc, policy, actuals, t, length)

    if policy.kind in ("lad", "plad") or win.n_scenarios == 1:
        if win.n_scenarios > 1:
            win = mean_forecast(win)
        lp, vmap = build_lad(vc, state, win, flows=policy.flows)
        sol = solve_lp(lp, policy.lp)
        if sol.status != "optimal":
            raise SimulationError(f"period {t}: look-ahead came back '{sol.status}'")
        return first_stage_values(sol, vmap), float(sol.objective), 0

    cfg = dataclasses.replace(policy.benders, flows=policy.flows, lp=policy.lp)
    res = run_benders(vc, state, win, cfg)
    if res.status == "iteration_limit":
        raise IterationLimit(
            f"period {t}: decomposition used all {cfg.max_iter} iterations "
            f"with relative gap {res.trace[-1].gap:.3g}"
        )
    if res.status != "optimal":
        raise SimulationError(f"period {t}: decomposition stopped at '{res.status}'")
    return dict(res.x1), float(res.objective), res.iterations


def run_simulation(vc, actuals, policy: PolicySpec, state=None) -> SimulationLog:
    """Roll a policy through the realized day, settling every slice."""
    if not isinstance(vc, ValidatedCase):
        raise TypeError("run_simulation requires a ValidatedCase")
    _check_actuals(actuals)
    if policy.kind == "pd":
        return run_perfect_dispatch(vc, actuals, state=state, lp_opts=policy.lp,
                                    flows=policy.flows)
    if policy.scenarios is not None and policy.scenarios.horizon != actuals.horizon:
        raise ValidationError(
            f"scenario file covers {policy.scenarios.horizon} periods but the "
            f"day has {actuals.horizon}"
        )
    if policy.history is not None and policy.history.horizon != actuals.horizon:
        raise ValidationError(
            f"history has {policy.history.horizon}-period days but the day "
            f"has {actuals.horizon}"
        )
    state = state or initial_state(vc)
    steps = []
    totals = CostBreakdown()
    T = actuals.horizon
    for t in range(T):
        t0 = time.perf_counter()
        length = min(policy.horizon, T - t)
        load, pmax = _realized_at(actuals, t)
        avail = available_capacity(vc, state, pmax_now=pmax)
        x1, objective, iters = _plan_step(vc, state, policy, actuals, t, length)
        d, costs = settle_first_period(
            vc, state, load, pmax, x1, policy.lp, policy.flows
        )
        steps.append(
            _record(t, d, costs, avail, objective,
                    (time.perf_counter() - t0) * 1e3, iters)
        )
        totals = totals + costs
        state = SystemState(
            prev_dispatch={g.id: d.pg_at(g.id, 0) for g in vc.case.generators},
            wall_clock=t + 1,
        )
    return SimulationLog(
        case_name=vc.case.name,
        policy=policy.kind,
        horizon=policy.horizon,
        periods=T,
        steps=tuple(steps),
        totals=totals,
    )


def _record(t, d, costs, avail, objective, ms, iters):
    return StepRecord(
        period=t,
        cost=costs.total,
        breakdown=costs,
        pg=d.first_stage_pg(),
        reserve={
            (p, g): v
            for (p, g, tt, ss), v in d.reserve.items()
            if tt == 0 and ss == 0
        },
        shortage=d.shortage.get((0, 0), 0.0),
        surplus=d.surplus.get((0, 0), 0.0),
        flow_excess=sum(
            v for (_e, tt, ss), v in d.flow_excess.items() if tt == 0 and ss == 0
        ),
        available_mw=avail.total,
        available_fast_mw=avail.fast,
        planning_objective=objective,
        solve_ms=ms,
        benders_iterations=iters,
    )


def run_perfect_dispatch(vc, actuals, state=None, lp_opts=None,
                         flows="full") -> SimulationLog:
    """The hindsight benchmark: one full-day plan, replayed slice by slice.

    The plan is the look-ahead model over the entire realized day; each
    period's planned quantities are settled exactly like any policy's
    commitments, so the benchmark total is comparable dollar for dollar."""
    if not isinstance(vc, ValidatedCase):
        raise TypeError("run_perfect_dispatch requires a ValidatedCase")
    _check_actuals(actuals)
    state = state or initial_state(vc)
    t0 = time.perf_counter()
    lp, vmap = build_lad(vc, state, actuals, flows=flows)
    sol = solve_lp(lp, lp_opts)
    if sol.status != "optimal":
        raise SimulationError(f"full-day plan came back '{sol.status}'")
    plan = extract_dispatch(sol, vmap)
    plan_ms = (time.perf_counter() - t0) * 1e3
    steps = []
    totals = CostBreakdown()
    T = actuals.horizon
    for t in range(T):
        ts = time.perf_counter()
        x1 = {}
        for kind, gid in first_stage_keys(vc.case):
            if kind == "pg":
                x1[(kind, gid)] = plan.pg_at(gid, t)
            else:
                x1[(kind, gid)] = plan.reserve_at(kind, gid, t)
        load, pmax = _realized_at(actuals, t)
        avail = available_capacity(vc, state, pmax_now=pmax)
        d, costs = settle_first_period(vc, state, load, pmax, x1, lp_opts, flows)
        step_ms = (time.perf_counter() - ts) * 1e3
        if t == 0:
            step_ms += plan_ms  # the shared plan is charged to the first slice
        steps.append(_record(t, d, costs, avail, float(sol.objective), step_ms, 0))
        totals = totals + costs
        state = SystemState(
            prev_dispatch={g.id: d.pg_at(g.id, 0) for g in vc.case.generators},
            wall_clock=t + 1,
        )
    return SimulationLog(
        case_name=vc.case.name,
        policy="pd",
        horizon=T,
        periods=T,
        steps=tuple(steps),
        totals=totals,
    )


# ---------------------------------------------------------------------------
# operational summaries


@dataclasses.dataclass(frozen=True)
class AvailableCapacity:
    """Deliverable headroom over the next period, split by ramp speed."""

    total: float
    fast: float          # units able to move >= 1% of capacity per minute
    slow: float
    per_gen: dict


def available_capacity(vc, state, pmax_now=None) -> AvailableCapacity:
    """How much output could be online one period from now.

    Per committed generator: the lesser of available capacity and the
    reachable level ``prev + ramp_up * step``."""
    case = vc.case if isinstance(vc, ValidatedCase) else vc
    pmax_now = pmax_now or {}
    per_gen = {}
    fast = slow = 0.0
    for g in case.generators:
        if not g.committed(state.wall_clock):
            continue
        cap = float(pmax_now.get(g.id, g.pmax))
        prev = float(state.prev_dispatch.get(g.id, g.initial_output))
        avail = min(cap, prev + g.ramp_up * case.step_minutes)
        per_gen[g.id] = avail
        if g.pmax > 0 and g.ramp_up >= 0.01 * g.pmax:
            fast += avail
        else:
            slow += avail
    return AvailableCapacity(
        total=fast + slow, fast=fast, slow=slow, per_gen=per_gen
    )


def daily_savings(sced_cost, policy_cost):
    """Fractional cost reduction relative to the no-look-ahead baseline."""
    if sced_cost <= 0:
        raise ValidationError(
            f"baseline cost must be positive to compare against, got {sced_cost}"
        )
    return (sced_cost - policy_cost) / sced_cost


# ---------------------------------------------------------------------------
# log export

#: column order for step tables; stable across runs for byte-identical output
STEP_COLUMNS = (
    "period", "cost", "energy", "imports", "no_load", "reserves",
    "penalty_balance", "penalty_reserves", "penalty_flow",
    "shortage_mw", "surplus_mw", "flow_excess_mw",
    "available_mw", "available_fast_mw",
    "planning_objective", "benders_iterations",
)
TIMING_COLUMNS = ("solve_ms",)


def log_rows(log: SimulationLog, timings=False):
    """Step table as (header, rows of floats/ints) in documented order."""
    cols = STEP_COLUMNS + (TIMING_COLUMNS if timings else ())
    rows = []
    for s in log.steps:
        b = s.breakdown
        row = {
            "period": s.period + 1,
            "cost": s.cost,
            "energy": b.energy,
            "imports": b.imports,
            "no_load": b.no_load,
            "reserves": b.reserves,
            "penalty_balance": b.penalty_balance,
            "penalty_reserves": b.penalty_reserves,
            "penalty_flow": b.penalty_flow,
            "shortage_mw": s.shortage,
            "surplus_mw": s.surplus,
            "flow_excess_mw": s.flow_excess,
            "available_mw": s.available_mw,
            "available_fast_mw": s.available_fast_mw,
            "planning_objective": s.planning_objective,
            "benders_iterations": s.benders_iterations,
            "solve_ms": s.solve_ms,
        }
        rows.append([row[c] for c in cols])
    return list(cols), rows


def log_summary(log: SimulationLog):
    """Aggregate view of one day: totals plus the breakdown."""
    out = {
        "case": log.case_name,
        "policy": log.policy,
        "periods": log.periods,
        "horizon": log.horizon,
        "total_cost": log.total_cost,
    }
    out.update({k: v for k, v in log.totals.as_dict().items() if k != "total"})
    out["total_shortage_mw"] = sum(s.shortage for s in log.steps)
    out["total_surplus_mw"] = sum(s.surplus for s in log.steps)
    return out
