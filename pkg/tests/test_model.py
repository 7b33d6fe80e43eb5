"""Data-model tests: parsing, validation, serialization, scenario files."""

import dataclasses

import numpy as np
import pytest

from rtdispatch.model import (
    CaseFormatError,
    Generator,
    Scenario,
    ScenarioSet,
    ValidationError,
    check_scenarios,
    format_timeseries,
    initial_state,
    parse_case,
    parse_timeseries,
    serialize_case,
    validate_case,
)

from conftest import case3_scenarios, make_case3, make_toy_case


# ---------------------------------------------------------------------------
# case round-trip


def test_case_round_trip_is_exact():
    for case in (make_toy_case(), make_case3()):
        text = serialize_case(case)
        back = parse_case(text)
        assert back == case
        assert serialize_case(back) == text


def test_parse_case_reports_field_paths():
    case = make_case3()
    import json

    raw = json.loads(serialize_case(case))
    del raw["generators"][1]["pmax"]
    with pytest.raises(CaseFormatError, match=r"generators\[1\].*pmax"):
        parse_case(json.dumps(raw))

    raw = json.loads(serialize_case(case))
    raw["penalties"]["shortage"] = "lots"
    with pytest.raises(CaseFormatError, match="penalties"):
        parse_case(json.dumps(raw))

    with pytest.raises(CaseFormatError):
        parse_case("not json {")


def test_parse_case_rejects_dangling_references():
    import json

    raw = json.loads(serialize_case(make_case3()))
    raw["generators"][0]["bus"] = "B9"
    with pytest.raises((CaseFormatError, ValidationError), match="B9"):
        validate_case(parse_case(json.dumps(raw)))

    raw = json.loads(serialize_case(make_case3()))
    raw["generators"][1]["id"] = "G1"
    with pytest.raises((CaseFormatError, ValidationError), match="G1"):
        validate_case(parse_case(json.dumps(raw)))


def test_validate_collects_every_problem():
    bad = dataclasses.replace(
        make_toy_case(),
        generators=(
            dataclasses.replace(
                make_toy_case().generators[0], pmin=25.0, ramp_up=-1.0
            ),
            make_toy_case().generators[1],
        ),
    )
    with pytest.raises(ValidationError) as err:
        validate_case(bad)
    msg = str(err.value)
    assert "pmin" in msg and "ramp" in msg and "G1" in msg


def test_validate_checks_segment_widths_and_prices():
    g = dataclasses.replace(
        make_toy_case().generators[0], segments=((5.0, 120.0), (5.0, 100.0))
    )
    bad = dataclasses.replace(make_toy_case(), generators=(g, make_toy_case().generators[1]))
    with pytest.raises(ValidationError) as err:
        validate_case(bad)
    msg = str(err.value)
    assert "widths" in msg and "nondecreasing" in msg


def test_validate_checks_branches_and_penalties():
    case = make_case3()
    bad = dataclasses.replace(
        case,
        branches=(
            dataclasses.replace(case.branches[0], limit_lo=5.0, limit_hi=-5.0),
            dataclasses.replace(case.branches[1], ptdf={"B1": 1.5}),
        ),
    )
    with pytest.raises(ValidationError) as err:
        validate_case(bad)
    msg = str(err.value)
    assert "limit_lo" in msg and "ptdf" in msg


def test_validated_case_indexes():
    vc = validate_case(make_case3())
    assert vc.gen_index["G2"] == 1
    assert vc.bus_index["B3"] == 2
    assert vc.branch_index["E2"] == 1
    assert vc.case.name == "case3"
    # attribute passthrough
    assert vc.step_minutes == 5.0


def test_flag_profiles_clamp_to_last_value():
    g = Generator(
        id="X", bus="B1", pmin=0.0, pmax=10.0, initial_output=0.0,
        ramp_up=1.0, ramp_down=1.0, segments=((10.0, 50.0),),
        commit=(True, False),
    )
    assert g.committed(0) is True
    assert g.committed(1) is False
    assert g.committed(7) is False  # past the profile end: last value holds


def test_initial_state_uses_initial_output():
    st = initial_state(validate_case(make_case3()))
    assert st.prev_dispatch == {"G1": 30.0, "G2": 20.0, "G3": 15.0, "GI": 0.0}
    assert st.wall_clock == 0


# ---------------------------------------------------------------------------
# day / scenario files


def test_timeseries_round_trip():
    case = validate_case(make_case3())
    ss = case3_scenarios(seed=3, horizon=4, n=3)
    text = format_timeseries(ss)
    back = parse_timeseries(text, case)
    assert back.horizon == ss.horizon
    assert [s.id for s in back.scenarios] == [s.id for s in ss.scenarios]
    for a, b in zip(back.scenarios, ss.scenarios):
        assert a.prob == pytest.approx(b.prob, rel=1e-9)
        for bus in a.load:
            np.testing.assert_allclose(a.load[bus], b.load[bus], rtol=1e-9)
        for g in a.pmax_override:
            np.testing.assert_allclose(a.pmax_override[g], b.pmax_override[g], rtol=1e-9)


def test_deterministic_file_omits_scenario_columns():
    case = validate_case(make_toy_case())
    text = "period,load:B1\n1,10\n2,35\n"
    ss = parse_timeseries(text, case)
    assert ss.n_scenarios == 1
    assert ss.scenarios[0].prob == 1.0
    assert ss.scenarios[0].load["B1"] == (10.0, 35.0)
    assert "scenario" not in format_timeseries(ss).splitlines()[0]


def test_timeseries_rejects_bad_layout():
    case = validate_case(make_toy_case())
    with pytest.raises(CaseFormatError, match="period"):
        parse_timeseries("load:B1\n10\n", case)
    with pytest.raises(CaseFormatError, match="unknown bus"):
        parse_timeseries("period,load:B9\n1,10\n", case)
    with pytest.raises(CaseFormatError, match="unrecognized column"):
        parse_timeseries("period,load:B1,temp\n1,10,4\n", case)
    with pytest.raises(CaseFormatError, match="duplicate period"):
        parse_timeseries("period,load:B1\n1,10\n1,11\n", case)
    with pytest.raises(CaseFormatError, match="not 1..2"):
        parse_timeseries("period,load:B1\n1,10\n3,11\n", case)
    with pytest.raises(CaseFormatError, match="appear together"):
        parse_timeseries("period,scenario,load:B1\n1,a,10\n", case)
    with pytest.raises(CaseFormatError, match="no load column"):
        parse_timeseries("period,pmax:G1\n1,10\n", case)
    with pytest.raises(CaseFormatError, match="different numbers of periods"):
        parse_timeseries(
            "period,scenario,prob,load:B1\n1,a,0.5,10\n2,a,0.5,11\n1,b,0.5,10\n",
            case,
        )


def test_timeseries_comment_lines_are_skipped():
    case = validate_case(make_toy_case())
    text = "# schema_version=1\nperiod,load:B1\n1,10\n2,35\n"
    assert parse_timeseries(text, case).horizon == 2


def test_check_scenarios_probability_and_bounds():
    mk = lambda prob: ScenarioSet(
        scenarios=(
            Scenario(id="a", prob=prob, load={"B1": (1.0,)}),
            Scenario(id="b", prob=0.5, load={"B1": (1.0,)}),
        ),
        horizon=1,
    )
    check_scenarios(mk(0.5))
    with pytest.raises(ValidationError, match="sum"):
        check_scenarios(mk(0.4))
    zero = ScenarioSet(
        scenarios=(
            Scenario(id="a", prob=0.0, load={"B1": (1.0,)}),
            Scenario(id="b", prob=1.0, load={"B1": (1.0,)}),
        ),
        horizon=1,
    )
    with pytest.raises(ValidationError, match="nonpositive"):
        check_scenarios(zero)
    bad_len = ScenarioSet(
        scenarios=(Scenario(id="a", prob=1.0, load={"B1": (1.0,)}),), horizon=2
    )
    with pytest.raises(ValidationError, match="wrong length"):
        check_scenarios(bad_len)
    neg = ScenarioSet(
        scenarios=(Scenario(id="a", prob=1.0, load={"B1": (-1.0,)}),), horizon=1
    )
    with pytest.raises(ValidationError, match="negative load"):
        check_scenarios(neg)


def test_check_scenarios_override_against_pmin():
    case = validate_case(make_case3())
    ss = ScenarioSet(
        scenarios=(
            Scenario(
                id="a", prob=1.0,
                load={b: (30.0,) for b in case.case.buses},
                pmax_override={"G1": (4.0,)},  # below G1's pmin of 10
            ),
        ),
        horizon=1,
    )
    with pytest.raises(ValidationError, match="below pmin"):
        check_scenarios(ss, case)


def test_window_and_with_period_data():
    ss = case3_scenarios(seed=1, horizon=6, n=2)
    w = ss.window(2, 3)
    assert w.horizon == 3
    assert w.scenarios[0].load["B1"] == ss.scenarios[0].load["B1"][2:5]
    # truncation at the end of the horizon
    assert ss.window(4, 10).horizon == 2
    with pytest.raises(ValueError):
        ss.window(6, 1)

    upd = ss.with_period_data(0, {"B1": 99.0, "B2": 98.0, "B3": 97.0}, {"G3": 33.0})
    for s in upd.scenarios:
        assert s.load["B1"][0] == 99.0
        assert s.pmax_override["G3"][0] == 33.0
    # untouched periods survive
    assert upd.scenarios[1].load["B2"][3] == ss.scenarios[1].load["B2"][3]
