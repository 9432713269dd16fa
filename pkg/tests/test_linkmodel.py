"""Tests for the analytic link model, calibration and distance cutoff."""

import math
import random

import pytest

from dwdm_qkd.linkmodel import (
    BUILTIN_SCENARIOS,
    CalibrationError,
    CalibrationInputs,
    LinkParams,
    SourceParams,
    arm_efficiency,
    calibrate,
    coincidence_probabilities,
    distance_scan,
    get_scenario,
    invert_mu_from_sifted_rate,
    load_scenario_file,
    max_distance,
    model_qber,
    model_visibility,
    polarization_error_from_visibility,
    predict_rates,
    scan_csv_lines,
    write_scenario_file,
)

BASELINE = BUILTIN_SCENARIOS["table1-baseline"]
IMPROVED = BUILTIN_SCENARIOS["discussion-improved"]


# ------------------------------------------------------------- efficiencies


def test_arm_efficiency_zero_distance():
    link = LinkParams(0.05, 0.20, 0.22, 0.0)
    assert arm_efficiency(link) == pytest.approx(0.01)


def test_arm_efficiency_25km():
    link = LinkParams(0.05, 0.20, 0.22, 25.0)
    # 0.01 * 10^-0.55, evaluated independently: 2.8184e-3
    assert arm_efficiency(link) == pytest.approx(2.8184e-3, rel=0.01)


def test_arm_efficiency_lossless():
    for arm in (0.0, 10.0, 1000.0):
        assert arm_efficiency(LinkParams(1.0, 1.0, 0.0, arm)) == 1.0


def test_link_params_validation():
    with pytest.raises(ValueError):
        LinkParams(-0.1, 0.2, 0.22, 0.0)
    with pytest.raises(ValueError):
        LinkParams(0.1, 1.2, 0.22, 0.0)
    with pytest.raises(ValueError):
        LinkParams(0.1, 0.2, -0.22, 0.0)
    with pytest.raises(ValueError):
        LinkParams(0.1, 0.2, 0.22, -1.0)


def test_source_params_validation():
    with pytest.raises(ValueError):
        SourceParams(mu=-0.1, f_rep_hz=78e6, noise_prob=0, polarization_error=0)
    with pytest.raises(ValueError):
        SourceParams(mu=0.1, f_rep_hz=0, noise_prob=0, polarization_error=0)
    with pytest.raises(ValueError):
        SourceParams(mu=0.1, f_rep_hz=78e6, noise_prob=1.5, polarization_error=0)
    with pytest.raises(ValueError):
        SourceParams(mu=0.1, f_rep_hz=78e6, noise_prob=0, polarization_error=0.6)


# ----------------------------------------------------- coincidence model


def test_coincidence_probabilities_baseline():
    src = BASELINE.source
    p_true, p_false = coincidence_probabilities(src, 0.01)
    assert p_true == pytest.approx(3.5e-7)
    # term-by-term: mu^2 eta^2 + 8 mu eta d + 16 d^2 = 2.7668e-9
    assert p_false == pytest.approx(2.85e-9, rel=0.05)
    assert p_false == pytest.approx(2.7668e-9, rel=1e-3)


def test_coincidence_probabilities_degenerate():
    src = SourceParams(mu=0.0, f_rep_hz=78e6, noise_prob=0.0, polarization_error=0.0)
    assert coincidence_probabilities(src, 0.01) == (0.0, 0.0)


def test_coincidence_probabilities_noise_floor():
    d = 4.4e-6
    src = SourceParams(mu=0.1, f_rep_hz=78e6, noise_prob=d, polarization_error=0.0)
    p_true, p_false = coincidence_probabilities(src, 0.0)
    assert p_true == 0.0
    assert p_false == pytest.approx(16.0 * d * d, rel=1e-12)


def test_p_false_factorization_identity():
    # p_false == (mu*eta + 4d)^2 on random parameter draws.
    rng = random.Random(20260811)
    for _ in range(1000):
        src = SourceParams(
            mu=rng.uniform(0.0, 0.5),
            f_rep_hz=78e6,
            noise_prob=rng.uniform(0.0, 1e-3),
            polarization_error=0.0,
        )
        eta = rng.uniform(0.0, 1.0)
        _, p_false = coincidence_probabilities(src, eta)
        factored = (src.mu * eta + 4.0 * src.noise_prob) ** 2
        assert p_false == pytest.approx(factored, rel=1e-12, abs=1e-300)


def test_model_qber_baseline():
    e = model_qber(BASELINE.source, 0.01)
    assert e == pytest.approx(0.064, abs=0.003)
    # measured Table-1 value 6.6%; model agrees within half a percentage point
    assert abs(e - 0.066) < 0.005


def test_model_qber_trivial_cases():
    src = SourceParams(mu=0.01, f_rep_hz=78e6, noise_prob=0.0, polarization_error=0.0)
    # b = 0 and p_false -> mu^2 eta^2 only; with mu -> 0 the QBER -> 0
    assert model_qber(src, 1e-6) == pytest.approx(0.5 * src.mu / (1 + src.mu), abs=1e-9)
    zero_noise = SourceParams(mu=0.0, f_rep_hz=78e6, noise_prob=1e-5, polarization_error=0.3)
    assert model_qber(zero_noise, 0.5) == 0.5  # accidentals only
    with pytest.raises(ValueError):
        model_qber(SourceParams(0.0, 78e6, 0.0, 0.0), 0.01)


def test_model_qber_pure_signal_b_zero():
    src = SourceParams(mu=1e-9, f_rep_hz=78e6, noise_prob=0.0, polarization_error=0.0)
    assert model_qber(src, 0.9) == pytest.approx(0.0, abs=1e-9)


def test_model_visibility_baseline():
    v = model_visibility(BASELINE.source, 0.01)
    assert v == pytest.approx((1 - 0.12) * 3.5e-7 / (3.5e-7 + 2.7668e-9), rel=1e-6)


# ------------------------------------------------------------ predictions


def test_predict_rates_table1_zero_km():
    p = predict_rates(BASELINE.source, BASELINE.link, BASELINE.f_ec)
    assert p.total_km == 0.0
    assert p.r_sift == pytest.approx(13.7, abs=1.4)  # reference 13.8 +- 0.3
    assert p.r_key == pytest.approx(3.3, rel=0.10)  # reference 3.28 +- 0.08
    assert 0.061 <= p.qber <= 0.069


def test_predict_rates_table1_50_km():
    p = predict_rates(BASELINE.source, BASELINE.link.with_arm_length(25.0), BASELINE.f_ec)
    assert p.total_km == 50.0
    assert p.r_sift == pytest.approx(1.1, rel=0.2)  # reference 1.01 +- 0.06
    assert p.qber == pytest.approx(0.071, abs=0.007)  # reference 6.9 +- 1.5 %
    assert p.r_key == pytest.approx(0.21, rel=0.3)  # reference 0.21 +- 0.13


def test_predict_rates_silent_source():
    src = SourceParams(mu=0.0, f_rep_hz=78e6, noise_prob=0.0, polarization_error=0.0)
    p = predict_rates(src, BASELINE.link)
    assert (p.r_sift, p.r_false, p.r_key) == (0.0, 0.0, 0.0)


def test_predict_rates_false_rate_convention():
    p = predict_rates(BASELINE.source, BASELINE.link)
    _, p_false = coincidence_probabilities(BASELINE.source, 0.01)
    assert p.r_false == pytest.approx(0.5 * p_false * 78e6, rel=1e-12)


# ------------------------------------------------------------ distance scan


def test_distance_scan_reproduces_table1_rows():
    rows = distance_scan(BASELINE.source, BASELINE.link, BASELINE.f_ec, [0.0, 25.0])
    assert rows[0].total_km == 0.0 and rows[1].total_km == 50.0
    assert rows[0].r_sift == pytest.approx(13.7, abs=1.4)
    assert rows[1].r_key == pytest.approx(0.21, rel=0.3)


def test_distance_scan_monotonicity():
    grid = [k * 2.5 for k in range(0, 25)]  # arm lengths up to 60 km
    rows = distance_scan(BASELINE.source, BASELINE.link, BASELINE.f_ec, grid)
    cutoff = max_distance(BASELINE.source, BASELINE.link, BASELINE.f_ec)
    previous_key = math.inf
    previous_e = -1.0
    for row in rows:
        if row.total_km < cutoff:
            assert row.r_key < previous_key
            previous_key = row.r_key
        assert row.qber >= previous_e
        previous_e = row.qber


def test_scan_csv_format():
    rows = distance_scan(BASELINE.source, BASELINE.link, BASELINE.f_ec, [0.0])
    lines = scan_csv_lines(rows, {"scenario": "table1-baseline"})
    assert lines[0] == "# scenario = table1-baseline"
    assert lines[1] == "total_km,r_sift,qber,r_key"
    assert len(lines) == 3
    fields = lines[2].split(",")
    assert float(fields[0]) == 0.0
    assert float(fields[3]) >= 0.0


# ------------------------------------------------------------ max distance


def test_max_distance_baseline():
    total = max_distance(BASELINE.source, BASELINE.link, BASELINE.f_ec)
    assert 72.0 <= total <= 88.0  # reference: around 80 km


def test_max_distance_improved():
    total = max_distance(IMPROVED.source, IMPROVED.link, IMPROVED.f_ec)
    assert 205.0 <= total <= 255.0  # reference: up to 230 km


def test_max_distance_unbounded_without_noise():
    src = SourceParams(mu=0.0035, f_rep_hz=78e6, noise_prob=0.0, polarization_error=0.02)
    assert max_distance(src, BASELINE.link) == math.inf


def test_max_distance_requires_positive_rate():
    src = SourceParams(mu=0.0035, f_rep_hz=78e6, noise_prob=4.4e-6, polarization_error=0.25)
    with pytest.raises(ValueError):
        max_distance(src, BASELINE.link)


def test_max_distance_grid_stability():
    coarse = max_distance(BASELINE.source, BASELINE.link, resolution_km=0.1)
    fine = max_distance(BASELINE.source, BASELINE.link, resolution_km=0.01)
    assert abs(coarse - fine) <= 0.1


# ------------------------------------------------------------- calibration


def reference_measurements() -> CalibrationInputs:
    return CalibrationInputs(
        r_sift_0km=13.8,
        r_sift_far=1.01,
        r_false_0km=0.22,
        v_tot_0km=0.867,
        far_arm_km=25.0,
        r_sift_0km_sigma=0.3,
        v_tot_0km_sigma=0.010,
    )


def test_calibrate_reference_values():
    result = calibrate(reference_measurements(), BASELINE.link, 78e6, 4.4e-6)
    assert result.mu == pytest.approx(0.0035, rel=0.03)
    assert result.b == pytest.approx(0.060, abs=0.005)
    assert result.mu_sigma > 0
    assert result.b_sigma > 0
    assert result.source.mu == result.mu


def test_calibrate_roundtrip_exact():
    src = BASELINE.source
    link = BASELINE.link
    p0 = predict_rates(src, link.with_arm_length(0.0))
    p25 = predict_rates(src, link.with_arm_length(25.0))
    measured = CalibrationInputs(
        r_sift_0km=p0.r_sift,
        r_sift_far=p25.r_sift,
        r_false_0km=p0.r_false,
        v_tot_0km=p0.visibility,
        far_arm_km=25.0,
    )
    result = calibrate(measured, link, src.f_rep_hz, src.noise_prob)
    assert result.mu == pytest.approx(src.mu, rel=1e-6)
    assert result.b == pytest.approx(src.polarization_error, rel=1e-6)
    assert result.far_mu_ratio == pytest.approx(1.0, rel=1e-9)
    assert result.warnings == ()


def test_polarization_error_identity_without_accidentals():
    for b in (0.0, 0.02, 0.06, 0.3):
        v = 1.0 - 2.0 * b
        assert polarization_error_from_visibility(v, 1e-7, 0.0) == pytest.approx(b, abs=1e-15)


def test_calibrate_failures():
    with pytest.raises(CalibrationError):
        invert_mu_from_sifted_rate(-1.0, 0.01, 78e6, 4.4e-6)
    with pytest.raises(CalibrationError):
        # visibility too high for the accidental fraction -> negative b
        polarization_error_from_visibility(1.0, 1e-7, 1e-8)
    with pytest.raises(CalibrationError):
        # rate below the pure-noise floor has no positive-mu solution
        invert_mu_from_sifted_rate(1e-12, 0.01, 78e6, 4.4e-2)


def test_qber_limit_at_long_distance():
    link = BASELINE.link.with_arm_length(250.0)  # 500 km total
    e = model_qber(BASELINE.source, arm_efficiency(link))
    assert abs(e - 0.5) < 1e-3


# ---------------------------------------------------------------- scenarios


def test_builtin_scenarios_exist():
    assert "table1-baseline" in BUILTIN_SCENARIOS
    assert "discussion-improved" in BUILTIN_SCENARIOS
    assert IMPROVED.link.collection_efficiency == 0.21
    assert IMPROVED.source.noise_prob == 2.4e-6


def test_scenario_file_roundtrip(tmp_path):
    path = tmp_path / "scenario.toml"
    write_scenario_file(path, BASELINE)
    loaded = load_scenario_file(path)
    assert loaded == BASELINE


def test_get_scenario_resolution(tmp_path):
    assert get_scenario("table1-baseline") is BASELINE
    path = tmp_path / "custom.toml"
    write_scenario_file(path, IMPROVED)
    assert get_scenario(path).source == IMPROVED.source
    with pytest.raises(ValueError, match="unknown scenario"):
        get_scenario("no-such-preset")
