"""Tests for the protocol-level rate math."""

import math

import pytest

from dwdm_qkd.keyrate import (
    Basis,
    BasisSetting,
    Outcome,
    RateInputs,
    SETTING_LABELS,
    binary_entropy,
    parse_setting_pair_label,
    qber_from_visibility,
    same_basis_setting_pairs,
    secret_key_rate,
    setting_pair_label,
    visibility_from_extrema,
)

# Frozen oracle values, computed independently with mpmath at 50 digits.
H2_0066 = 0.3508159299  # H2(0.066)
H2_011 = 0.4999159582  # H2(0.11); the known ~11% zero-rate threshold


def test_binary_entropy_maximum():
    assert binary_entropy(0.5) == 1.0


def test_binary_entropy_boundaries():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0


def test_binary_entropy_frozen_value():
    assert binary_entropy(0.066) == pytest.approx(H2_0066, abs=1e-4)


@pytest.mark.parametrize("x", [-0.1, 1.1, float("nan")])
def test_binary_entropy_domain(x):
    with pytest.raises(ValueError):
        binary_entropy(x)


def test_binary_entropy_symmetry_grid():
    # H2(x) == H2(1 - x) on a dense grid.
    for i in range(1, 2000):
        x = i / 2000.0
        assert abs(binary_entropy(x) - binary_entropy(1.0 - x)) < 1e-12


def test_qber_from_visibility_values():
    assert qber_from_visibility(1.0) == 0.0
    assert qber_from_visibility(0.0) == 0.5
    # Table-1 anchor: V = 86.7% -> QBER = 6.6%.
    assert qber_from_visibility(0.867) == pytest.approx(0.0665, abs=5e-4)


def test_qber_from_visibility_domain():
    with pytest.raises(ValueError):
        qber_from_visibility(1.2)
    with pytest.raises(ValueError):
        qber_from_visibility(-1.2)


def test_qber_visibility_roundtrip():
    for i in range(0, 501):
        e = i / 1000.0
        assert qber_from_visibility(1.0 - 2.0 * e) == pytest.approx(e, abs=1e-15)


def test_visibility_from_extrema():
    assert visibility_from_extrema(100, 0) == 1.0
    assert visibility_from_extrema(50, 50) == 0.0
    assert visibility_from_extrema(933, 67) == pytest.approx(0.866, abs=1e-3)


def test_visibility_from_extrema_errors():
    with pytest.raises(ValueError):
        visibility_from_extrema(0, 0)
    with pytest.raises(ValueError):
        visibility_from_extrema(-1, 5)


def test_secret_key_rate_table1_point():
    # R_sift = 13.8 bit/s -> R_raw = 27.6/s; QBER 6.6%, f_ec = 1.17.
    rate = secret_key_rate(RateInputs(r_raw=27.6, qber=0.066, f_ec=1.17))
    assert rate == pytest.approx(3.3, abs=0.2)


def test_secret_key_rate_zero_error_limit():
    for f_ec in (1.0, 1.17, 2.0):
        rate = secret_key_rate(RateInputs(r_raw=100.0, qber=0.0, f_ec=f_ec))
        assert rate == pytest.approx(50.0, abs=1e-12)


def test_secret_key_rate_eleven_percent_threshold():
    r_raw = 27.6
    rate = secret_key_rate(RateInputs(r_raw=r_raw, qber=0.11, f_ec=1.0))
    assert abs(rate) < 1e-3 * r_raw / 2.0


def test_secret_key_rate_monotone_in_qber():
    for f_ec in (1.0, 1.17, 1.5):
        previous = math.inf
        for i in range(0, 301):
            e = 0.3 * i / 300.0
            rate = secret_key_rate(RateInputs(r_raw=10.0, qber=e, f_ec=f_ec))
            assert rate <= previous + 1e-12
            previous = rate


def test_secret_key_rate_linear_in_raw_rate():
    base = secret_key_rate(RateInputs(r_raw=7.3, qber=0.05))
    doubled = secret_key_rate(RateInputs(r_raw=14.6, qber=0.05))
    assert doubled == 2.0 * base


def test_rate_inputs_validation():
    with pytest.raises(ValueError):
        RateInputs(r_raw=-1.0, qber=0.1)
    with pytest.raises(ValueError):
        RateInputs(r_raw=1.0, qber=0.6)
    with pytest.raises(ValueError):
        RateInputs(r_raw=1.0, qber=0.1, f_ec=0.9)


def test_eight_same_basis_settings():
    pairs = same_basis_setting_pairs()
    assert len(pairs) == 8
    assert len(set(pairs)) == 8
    for alice, bob in pairs:
        assert alice.basis is bob.basis
    assert SETTING_LABELS == ("00", "01", "10", "11", "++", "+-", "-+", "--")


def test_setting_label_roundtrip():
    for pair in same_basis_setting_pairs():
        assert parse_setting_pair_label(setting_pair_label(pair)) == pair


def test_setting_label_rejects_cross_basis():
    with pytest.raises(ValueError):
        parse_setting_pair_label("0+")
    with pytest.raises(ValueError):
        parse_setting_pair_label("xx")


def test_basis_setting_labels():
    assert BasisSetting(Basis.COMPUTATIONAL, Outcome.ZERO).label == "0"
    assert BasisSetting(Basis.DIAGONAL, Outcome.ONE).label == "-"
