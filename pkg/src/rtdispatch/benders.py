"""Benders decomposition of the two-stage stochastic dispatch.

The extensive form is split into a first-period master and one future
subproblem per scenario.  Each master iteration prices the scenarios'
value functions through cuts built from the subproblems' first-stage
pin duals.  Separation runs at an interior candidate between the
current stabilization point and the master argmin; when the interior
pass yields nothing, separation re-seeds at the argmin itself, and if
that also yields nothing the bound is tight.

An upper bound is evaluated at the master argmin every iteration, so
the incumbent is always a genuinely feasible first stage with its true
expected cost — the reported objective never relies on the cut model
being complete.
"""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .formulation import (
    build_benders_master,
    build_benders_subproblem,
    first_stage_values,
    flow_limit_rows,
    pin_duals,
    pin_rhs_updates,
)
from .lp import BASIC, LPNumericalError, LPOptions, solve_lp
from .model import ValidationError


@dataclasses.dataclass(frozen=True)
class Cut:
    """One optimality cut: theta_s - coef_x1' x1 >= rhs_const."""

    scenario: int
    coef_x1: dict
    rhs_const: float
    coef_theta: float = 1.0
    origin: tuple = ()  # (iteration, seed) for the record; not identity

    def value_at(self, x1):
        """The cut's lower bound on theta_s at a first-stage point."""
        return self.rhs_const + sum(
            c * x1.get(k, 0.0) for k, c in self.coef_x1.items()
        )

    def _signature(self):
        coefs = tuple(
            sorted((k, round(v, 9)) for k, v in self.coef_x1.items() if v != 0.0)
        )
        return (self.scenario, coefs, round(self.rhs_const, 6))


class CutPool:
    """Ordered, duplicate-free cut collection."""

    def __init__(self, cuts=()):
        self._cuts = []
        self._seen = set()
        for c in cuts:
            self.add(c)

    def add(self, cut) -> bool:
        sig = cut._signature()
        if sig in self._seen:
            return False
        self._seen.add(sig)
        self._cuts.append(cut)
        return True

    def __iter__(self):
        return iter(self._cuts)

    def __len__(self):
        return len(self._cuts)

    def for_scenario(self, s):
        return [c for c in self._cuts if c.scenario == s]


@dataclasses.dataclass
class BendersConfig:
    epsilon: float = 1e-5        # relative UB-LB gap at termination
    max_iter: int = 100
    alpha: float = 0.5           # weight on the stabilization point
    init_floor: float = -1e12    # initial theta floor per scenario
    cut_tol: float = 1e-7        # violation threshold for adding a cut
    workers: int = 1
    flows: str = "full"          # "full" | "lazy" flowgate handling
    lazy_tol: float = 1e-6
    lazy_max_rounds: int = 50
    check_duals: bool = True     # cross-check cut constants via the dual
    lp: LPOptions = dataclasses.field(default_factory=LPOptions)


@dataclasses.dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lower: float
    upper: float
    gap: float
    cuts_added: int
    wall_ms: float


@dataclasses.dataclass
class BendersResult:
    status: str                  # "optimal" | "iteration_limit"
    objective: float             # best upper bound (true cost of x1)
    x1: dict                     # incumbent first stage
    lower: float
    upper: float
    iterations: int
    cuts: tuple
    trace: tuple                 # IterationRecord per iteration
    scenario_values: dict        # scenario id -> future cost at x1
    master_solution: object = None
    master_vmap: object = None
    subproblem_solves: int = 0


def in_out_candidate(x_hat, x_rmp, alpha):
    """Convex combination of the stabilization point and the master argmin."""
    keys = set(x_hat) | set(x_rmp)
    return {
        k: alpha * x_hat.get(k, 0.0) + (1.0 - alpha) * x_rmp.get(k, 0.0)
        for k in keys
    }


def relative_gap(upper, lower):
    return (upper - lower) / max(1.0, abs(upper))


# ---------------------------------------------------------------------------
# lazy flowgate separation


def flow_violations(vmap, sol, tol):
    """Flowgate rows violated by a solution but absent from the model.

    Returns (key, cols, vals, sense, rhs, name) row specs; an empty list
    certifies that every monitored limit holds within ``tol`` net of the
    priced excess already carried by the flow-excess column."""
    case = vmap.meta["case"].case
    cells = sorted({(k[2], k[3]) for k, _ in vmap.columns() if k[0] == "inj"})
    present = {k for k, _ in vmap.rows()}
    specs = []
    for e in case.branches:
        if not e.monitored:
            continue
        for t, s in cells:
            if ("flow_upper", e.id, t, s) in present:
                continue
            flow = sum(
                coef * sol.x[vmap.col(("inj", bus, t, s))]
                for bus, coef in e.ptdf.items()
                if vmap.get(("inj", bus, t, s)) is not None
            )
            df = sol.x[vmap.col(("flow_excess", e.id, t, s))]
            if flow - df > e.limit_hi + tol or flow + df < e.limit_lo - tol:
                specs.extend(flow_limit_rows(vmap, e, t, s))
    return specs


def solve_with_lazy_flows(lp, vmap, opts=None, tol=1e-6, max_rounds=50):
    """Solve, generating violated flowgate rows until none remain.

    Returns (solution, final_lp); the registry is extended in place with
    every appended row.  The fixed point satisfies exactly the same
    constraints as the fully materialized model."""
    sol = solve_lp(lp, opts)
    for _ in range(max_rounds):
        if sol.status != "optimal":
            return sol, lp
        specs = flow_violations(vmap, sol, tol)
        if not specs:
            return sol, lp
        n_rows = lp.n_rows
        rows = []
        for i, (key, cols, vals, sense, rhs, name) in enumerate(specs):
            vmap.add_row(key, n_rows + i)
            rows.append((cols, vals, sense, rhs, name))
        ext = lp.with_rows(rows)
        warm = None
        if sol.basis is not None:
            basis, vstat = sol.basis
            warm = (
                np.concatenate(
                    [basis, np.arange(lp.n_vars + n_rows, lp.n_vars + ext.n_rows)]
                ),
                np.concatenate([vstat, np.full(len(rows), BASIC, dtype=np.int8)]),
            )
        lp, sol = ext, solve_lp(ext, opts, warm=warm)
    raise LPNumericalError(
        f"flowgate generation did not settle within {max_rounds} rounds"
    )


# ---------------------------------------------------------------------------
# scenario subproblems


class _ScenarioOracle:
    """One scenario's future-cost oracle: value and subgradient at a point.

    The subproblem LP is built once with zero pins; each query rewrites
    the pin right-hand sides and warm-starts from the previous basis.
    """

    def __init__(self, vc, scenarios, s, first_period, config):
        self.lp, self.vmap = build_benders_subproblem(
            vc, scenarios, s, x1=None, first_period=first_period, flows=config.flows
        )
        self.config = config
        self.scenario_id = scenarios.scenarios[s].id
        self.position = s
        self._last = None
        self.solves = 0

    def query(self, x1):
        """Future cost, pin-dual subgradient, and cut constant at ``x1``."""
        cfg = self.config
        lp = self.lp.with_rhs(pin_rhs_updates(self.vmap, x1))
        warm = self._last.basis if self._last is not None else None
        sol = solve_lp(lp, cfg.lp, warm=warm)
        if cfg.flows == "lazy" and sol.status == "optimal":
            sol, lp = solve_with_lazy_flows(
                lp, self.vmap, cfg.lp, cfg.lazy_tol, cfg.lazy_max_rounds
            )
            self.lp = lp  # keep generated rows for later queries
        self.solves += 1
        if sol.status != "optimal":
            raise LPNumericalError(
                f"scenario '{self.scenario_id}' subproblem came back "
                f"'{sol.status}' — the future is expected to be feasible "
                "and bounded from every reachable first stage"
            )
        self._last = sol
        sigma = pin_duals(self.vmap, sol)
        q = float(sol.objective)
        rhs_const = q - sum(sigma[k] * x1.get(k, 0.0) for k in sigma)
        if cfg.check_duals:
            self._check_cut_constant(lp, sol, x1, sigma, rhs_const)
        return q, sigma, rhs_const

    def _check_cut_constant(self, lp, sol, x1, sigma, rhs_const):
        """Recompute the cut constant through the dual objective.

        The primal route is Q - sigma'x; the dual route sums y'b over the
        non-pin rows plus the bound terms.  They agree iff strong duality
        held at the solve, so a disagreement flags a numerical failure
        rather than being absorbed into the cut pool."""
        pin_rows = set(self.vmap.meta["pin_rows"])
        rhs = lp.rhs_array()
        dual_obj = lp.obj_const
        for r in range(lp.n_rows):
            if r not in pin_rows:
                dual_obj += sol.duals[r] * rhs[r]
        z = sol.reduced_costs
        lo, hi = lp.lower, lp.upper
        # a meaningful reduced cost on an infinite bound is dual infeasibility;
        # a NUMERICALLY tiny one contributes exactly zero
        pos = (z > 0) & np.isfinite(lo)
        neg = (z < 0) & np.isfinite(hi)
        stray = ((z > 1e-6) & ~np.isfinite(lo)) | ((z < -1e-6) & ~np.isfinite(hi))
        if np.any(stray):
            raise LPNumericalError(
                f"scenario '{self.scenario_id}': reduced cost on an unbounded "
                "column — the dual certificate is inconsistent"
            )
        dual_obj += float(np.sum(z[pos] * lo[pos]))
        dual_obj += float(np.sum(z[neg] * hi[neg]))
        scale = max(1.0, abs(rhs_const))
        if not np.isfinite(dual_obj) or abs(dual_obj - rhs_const) > 1e-5 * scale:
            raise LPNumericalError(
                f"scenario '{self.scenario_id}': cut constant {rhs_const:.6g} "
                f"disagrees with the dual-route value {dual_obj:.6g}"
            )


def _query_all(oracles, x1, workers):
    """Query every scenario oracle at a point, in scenario order."""
    if workers <= 1 or len(oracles) <= 1:
        return [o.query(x1) for o in oracles]
    out = [None] * len(oracles)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(o.query, x1): i for i, o in enumerate(oracles)}
        for fut, i in futures.items():
            out[i] = fut.result()
    return out


# ---------------------------------------------------------------------------
# the decomposition loop


def run_benders(vc, state, scenarios, config: BendersConfig | None = None):
    """Solve the two-stage dispatch by cutting-plane decomposition.

    Deterministic for a fixed model and configuration, including under
    ``workers > 1`` (results are aggregated in scenario order)."""
    cfg = config or BendersConfig()
    if not 0.0 <= cfg.alpha < 1.0:
        raise ValidationError(f"alpha must be in [0, 1), got {cfg.alpha}")
    if scenarios.horizon < 2:
        raise ValidationError(
            "decomposition needs a look-ahead of at least two periods; "
            "dispatch a single period directly instead"
        )
    S = scenarios.n_scenarios
    probs = [s.prob for s in scenarios.scenarios]
    pool = CutPool(
        Cut(scenario=s, coef_x1={}, rhs_const=cfg.init_floor, origin=(0, "floor"))
        for s in range(S)
    )
    oracles = [
        _ScenarioOracle(vc, scenarios, s, state.wall_clock, cfg) for s in range(S)
    ]

    x_hat = None
    best_upper = np.inf
    best_x1 = None
    best_values = {}
    lower = -np.inf
    trace = []
    status = "iteration_limit"
    master_sol = master_vm = None

    for it in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        lp, vm = build_benders_master(vc, state, scenarios, list(pool), flows=cfg.flows)
        sol = solve_lp(lp, cfg.lp)
        if cfg.flows == "lazy" and sol.status == "optimal":
            sol, lp = solve_with_lazy_flows(lp, vm, cfg.lp, cfg.lazy_tol,
                                            cfg.lazy_max_rounds)
        if sol.status != "optimal":
            raise LPNumericalError(f"master came back '{sol.status}'")
        master_sol, master_vm = sol, vm
        lower = float(sol.objective)
        x_rmp = first_stage_values(sol, vm)
        theta = [float(sol.x[vm.col(("theta", s))]) for s in range(S)]
        stage_cost = lower - sum(p * th for p, th in zip(probs, theta))
        if x_hat is None:
            x_hat = dict(x_rmp)

        # pass 1: separate at the interior candidate
        added = 0
        x_tilde = in_out_candidate(x_hat, x_rmp, cfg.alpha)
        for s, (q, sigma, rhs_const) in enumerate(
            _query_all(oracles, x_tilde, cfg.workers)
        ):
            cut = Cut(scenario=s, coef_x1=sigma, rhs_const=rhs_const,
                      origin=(it, "interior"))
            if cut.value_at(x_rmp) - theta[s] > cfg.cut_tol * max(1.0, abs(q)):
                if pool.add(cut):
                    added += 1
        interior_hit = added > 0

        # upper bound at the master argmin (and pass 2 when pass 1 missed)
        results = _query_all(oracles, x_rmp, cfg.workers)
        upper = stage_cost + sum(p * q for p, (q, _s, _r) in zip(probs, results))
        if upper < best_upper:
            best_upper = upper
            best_x1 = dict(x_rmp)
            best_values = {
                scenarios.scenarios[s].id: q for s, (q, _s, _r) in enumerate(results)
            }
        if not interior_hit:
            for s, (q, sigma, rhs_const) in enumerate(results):
                cut = Cut(scenario=s, coef_x1=sigma, rhs_const=rhs_const,
                          origin=(it, "argmin"))
                if cut.value_at(x_rmp) - theta[s] > cfg.cut_tol * max(1.0, abs(q)):
                    if pool.add(cut):
                        added += 1

        x_hat = dict(x_tilde) if interior_hit else dict(x_rmp)
        gap = relative_gap(best_upper, lower)
        trace.append(
            IterationRecord(
                iteration=it,
                lower=lower,
                upper=best_upper,
                gap=gap,
                cuts_added=added,
                wall_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
        if gap <= cfg.epsilon or added == 0:
            status = "optimal"
            break

    return BendersResult(
        status=status,
        objective=best_upper,
        x1=best_x1,
        lower=lower,
        upper=best_upper,
        iterations=len(trace),
        cuts=tuple(pool),
        trace=tuple(trace),
        scenario_values=best_values,
        master_solution=master_sol,
        master_vmap=master_vm,
        subproblem_solves=sum(o.solves for o in oracles),
    )
