import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xgdg import ConfigError, DegreeTuple, PenaltyParams, sine_case, solve_scalar
from xgdg.reference import TABLES, get_table
from xgdg.study import (CASES, RateTable, StudyConfig, check_source, compare_to_reference, compute_errors,
                        lsq_slope, pairwise_rates, parse_config_text, run_study, table_from_reference)


@pytest.mark.parametrize("name", list(CASES))
def test_manufactured_sources_match_flux_divergence(name):
    case = CASES[name].build()
    X = np.random.default_rng(0).random((50, 2))
    assert check_source(case, X) < 1e-8


@pytest.mark.parametrize("name", list(TABLES))
def test_reference_self_comparison_passes(name):
    ref = get_table(name)
    cmp = compare_to_reference(table_from_reference(ref), ref)
    assert cmp.passed, cmp.summary()


def test_perturbed_rates_fail():
    ref = get_table("table2")
    t = table_from_reference(ref)
    t.errors["superclose"][-1] *= 2.0        # drops the final rate by one
    cmp = compare_to_reference(t, ref)
    assert not cmp.passed
    bad = {(c.level, c.column, c.kind) for c in cmp.failed()}
    assert (7, "superclose", "rate") in bad


def test_magnitude_tolerance():
    ref = get_table("table1")
    t = table_from_reference(ref)
    for i in range(len(t.levels)):
        t.errors["u_err"][i] *= 2.9
    assert compare_to_reference(t, ref).passed
    t.errors["u_err"][-1] *= 1.1
    assert not compare_to_reference(t, ref).passed


def test_comparison_needs_columns_and_levels():
    ref = get_table("table1")
    with pytest.raises(ConfigError):
        compare_to_reference(RateTable(["u_err"]), ref)
    t = RateTable(list(ref.columns))
    t.add(1, 1.0, {c: 1.0 for c in ref.columns})
    with pytest.raises(ConfigError):
        compare_to_reference(t, ref)
    with pytest.raises(ConfigError):
        get_table("table9")


@given(st.lists(st.floats(1e-12, 1e3), min_size=2, max_size=8), st.floats(0.5, 6))
def test_rates_of_geometric_sequences(start, r):
    e = [start[0] * 2.0 ** (-r * i) for i in range(len(start))]
    rates = pairwise_rates(e)
    assert rates[0] is None
    assert np.allclose(rates[1:], r)
    if len(e) >= 3:
        assert lsq_slope(list(range(len(e))), e) == pytest.approx(r)


@given(st.lists(st.floats(1e-10, 1.0), min_size=1, max_size=6))
def test_rate_table_roundtrip_and_determinism(errs):
    t = RateTable(["u_err", "superclose"])
    for i, e in enumerate(errs):
        t.add(i + 1, 0.5**i, {"u_err": e, "superclose": e / 3})
    csv1, csv2 = t.to_csv(), t.to_csv()
    assert csv1 == csv2
    lines = csv1.splitlines()
    assert lines[0] == "level,h,u_err,u_err_rate,superclose,superclose_rate"
    assert len(lines) == len(errs) + 1
    back = [float(line.split(",")[2]) for line in lines[1:]]
    assert np.allclose(back, errs, rtol=1e-10)


def test_rate_table_validation():
    t = RateTable(["u_err"])
    t.add(3, 0.1, {"u_err": 1.0})
    with pytest.raises(ValueError):
        t.add(5, 0.05, {"u_err": 0.5})
    with pytest.raises(ValueError):
        t.add(4, 0.05, {"u_err": -0.5})


def test_config_parsing():
    text = """
    # table 2 settings
    case = sine
    alpha = 2,1,1,2
    levels = 3..4     # inclusive
    schemes = s1, s2, s3
    eliminate_checks = false
    """
    cfg = StudyConfig.from_mapping(parse_config_text(text))
    assert cfg.alpha == DegreeTuple(2, 1, 1, 2)
    assert cfg.level_list() == [3, 4]
    assert cfg.schemes == ("s1", "s2", "s3")
    assert cfg.eliminate_checks is False
    assert json.loads(json.dumps(cfg.to_dict()))["levels"] == [3, 4]


@pytest.mark.parametrize("text", ["case sine", "= 3", "levels = 1..2\nlevels = 2..3"])
def test_config_syntax_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize("values", [
    {"levels": "5..3"}, {"levels": "0..2"}, {"levels": "a..b"}, {"case": "cube"},
    {"alpha": "1,2"}, {"rho": "-1"}, {"solver": "cg"}, {"schemes": "elastic"},
    {"case": "elastic-sine", "schemes": "elastic", "solver": "hybrid", "gamma": "1"},
    {"solver": "hybrid", "gamma": "0"}, {"formats": "xml"}, {"h_rule": "cell"},
    {"projection": "P2"}, {"colour": "red"},
])
def test_config_validation(values):
    with pytest.raises(ConfigError):
        StudyConfig.from_mapping(values)


def test_error_norm_properties(scalar_solution):
    sol = scalar_solution(3, 1)
    e = compute_errors(sol)
    assert set(e) == {"u_err", "superclose", "flux_err", "flux_divh"}
    assert all(v > 0 for v in e.values())
    # the superclose distance never exceeds the full error (Pythagoras for the L^2 projection)
    assert e["superclose"] <= e["u_err"]
    # the exact projection has zero superclose error
    import dataclasses
    exact = dataclasses.replace(sol, u=sol.spaces.disp.l2_project(sol.case.u_exact, exactness=16))
    assert compute_errors(exact, include_flux=False)["superclose"] < 1e-14


def test_error_quadrature_refinement_stable(scalar_solution, elastic_solution):
    for sol in (scalar_solution(3, 1), elastic_solution(3, 1)):
        base, fine = compute_errors(sol), compute_errors(sol, exactness=20)
        for key in base:
            assert fine[key] == pytest.approx(base[key], rel=1e-6), key


def test_run_study_small():
    cfg = StudyConfig.from_mapping({"case": "sine", "alpha": "2,1,1,2", "levels": "2..3",
                                    "schemes": "s1,s2,s3,taylor"})
    seen = []
    rep = run_study(cfg, progress=lambda lv, errs, dt: seen.append(lv))
    assert seen == [2, 3] and rep.ok
    assert rep.table.columns == ["u_err", "superclose", "post_s1", "post_s2", "post_s3", "post_taylor",
                                 "flux_err", "flux_divh"]
    d = json.loads(rep.to_json())
    assert d["table"]["derived_columns"] == ["flux_err", "flux_divh"]
    assert len(d["timings_s"]) == 2 and d["unknowns"][1] > d["unknowns"][0]


def test_run_study_hybrid_elastic():
    cfg = StudyConfig.from_mapping({"case": "elastic-sine", "alpha": "2,1,1,2", "levels": "2..3",
                                    "schemes": "elastic", "solver": "hybrid", "gamma": "0"})
    rep = run_study(cfg)
    assert rep.ok and rep.table.levels == [2, 3]


def test_run_study_records_solver_failure(monkeypatch):
    from xgdg import SolverFailure, study

    def boom(config, level, case=None):
        if level == 3:
            raise SolverFailure("singular", min_pivot=0.0)
        return real(config, level, case)
    real = study.solve_level
    monkeypatch.setattr(study, "solve_level", boom)
    rep = run_study(StudyConfig.from_mapping({"levels": "2..4"}))
    assert rep.table.levels == [2]
    assert rep.failures[0]["level"] == 3 and not rep.ok


def test_h_rule_mesh_changes_penalties_only_on_short_edges(meshes):
    m = meshes(3)
    a = solve_scalar(m, "2,1,1,2", PenaltyParams(gamma=1.0), sine_case())
    b = solve_scalar(m, "2,1,1,2", PenaltyParams(gamma=1.0, h_rule="mesh"), sine_case())
    assert np.linalg.norm(a.u - b.u) > 0
    assert compute_errors(b, include_flux=False)["u_err"] == pytest.approx(
        compute_errors(a, include_flux=False)["u_err"], rel=0.1)
