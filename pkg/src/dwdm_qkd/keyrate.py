"""Protocol-level rate mathematics for entanglement-based QKD.

Binary entropy, visibility/QBER conversion and the asymptotic secret-key-rate
lower bound for a BBM92-style link, plus the projective-setting bookkeeping
shared with the event simulator.

All functions are pure and operate on plain floats; they are safe to call from
any number of concurrent contexts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

# Error-correction inefficiency used throughout when none is supplied.
# Calibrated so that the reference operating point (R_sift = 13.8 bit/s,
# QBER = 6.6%) yields a 3.3 bit/s secret key rate; override via configuration.
DEFAULT_F_EC = 1.17


class Basis(enum.Enum):
    """Measurement basis of a polarization analyzer."""

    COMPUTATIONAL = "computational"
    DIAGONAL = "diagonal"


class Outcome(enum.IntEnum):
    """Projective outcome within a basis (|0>/|1> or |+>/|->)."""

    ZERO = 0
    ONE = 1


@dataclass(frozen=True)
class BasisSetting:
    """One party's projective measurement setting (basis + outcome)."""

    basis: Basis
    outcome: Outcome

    @property
    def label(self) -> str:
        if self.basis is Basis.COMPUTATIONAL:
            return "0" if self.outcome is Outcome.ZERO else "1"
        return "+" if self.outcome is Outcome.ZERO else "-"


SettingPair = tuple[BasisSetting, BasisSetting]

_LABEL_TO_SETTING = {
    "0": BasisSetting(Basis.COMPUTATIONAL, Outcome.ZERO),
    "1": BasisSetting(Basis.COMPUTATIONAL, Outcome.ONE),
    "+": BasisSetting(Basis.DIAGONAL, Outcome.ZERO),
    "-": BasisSetting(Basis.DIAGONAL, Outcome.ONE),
}


def same_basis_setting_pairs() -> tuple[SettingPair, ...]:
    """The eight joint (Alice, Bob) settings where both choose the same basis.

    Ordered computational first (00, 01, 10, 11) then diagonal
    (++, +-, -+, --); this ordering is the file-naming and seed-derivation
    contract of the simulator.
    """
    pairs = []
    for basis in (Basis.COMPUTATIONAL, Basis.DIAGONAL):
        for a_out in (Outcome.ZERO, Outcome.ONE):
            for b_out in (Outcome.ZERO, Outcome.ONE):
                pairs.append((BasisSetting(basis, a_out), BasisSetting(basis, b_out)))
    return tuple(pairs)


def setting_pair_label(pair: SettingPair) -> str:
    """Two-character label of a joint setting, e.g. ``"01"`` or ``"+-"``."""
    return pair[0].label + pair[1].label


def parse_any_setting_pair_label(label: str) -> SettingPair:
    """Parse any joint-setting label, cross-basis combinations included."""
    if len(label) != 2 or label[0] not in _LABEL_TO_SETTING or label[1] not in _LABEL_TO_SETTING:
        raise ValueError(f"unknown setting label {label!r}")
    return (_LABEL_TO_SETTING[label[0]], _LABEL_TO_SETTING[label[1]])


def parse_setting_pair_label(label: str) -> SettingPair:
    """Inverse of :func:`setting_pair_label`.

    Raises:
        ValueError: if the label is not one of the eight same-basis settings
            (cross-basis labels are rejected here; they have no role in the
            data-reduction pipeline).
    """
    a, b = parse_any_setting_pair_label(label)
    if a.basis is not b.basis:
        raise ValueError(f"setting label {label!r} mixes bases")
    return (a, b)


SETTING_LABELS = tuple(setting_pair_label(p) for p in same_basis_setting_pairs())


def binary_entropy(x: float) -> float:
    """Binary entropy H2(x) = -x*log2(x) - (1-x)*log2(1-x), in bits.

    Uses the convention 0*log2(0) = 0 at the boundaries.

    Raises:
        ValueError: if ``x`` is outside [0, 1] or not a number.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def qber_from_visibility(v_tot: float) -> float:
    """Quantum bit error rate implied by a total entanglement visibility.

    e = (1 - V_tot) / 2; perfect correlations (V = 1) give e = 0, no
    correlations (V = 0) give e = 0.5.

    Raises:
        ValueError: if ``v_tot`` is outside [-1, 1].
    """
    if not -1.0 <= v_tot <= 1.0:
        raise ValueError(f"visibility must be in [-1, 1], got {v_tot}")
    return (1.0 - v_tot) / 2.0


def visibility_from_extrema(c_max: float, c_min: float) -> float:
    """Visibility (C_max - C_min) / (C_max + C_min) from coincidence extrema.

    Raises:
        ValueError: on negative counts or if both counts are zero.
    """
    if c_max < 0 or c_min < 0:
        raise ValueError("coincidence counts must be non-negative")
    total = c_max + c_min
    if total == 0:
        raise ValueError("visibility undefined: no coincidence counts")
    return (c_max - c_min) / total


@dataclass(frozen=True)
class RateInputs:
    """Inputs to the secret-key-rate bound.

    Attributes:
        r_raw: total same-basis coincidence rate, 1/s (before sifting).
        qber: quantum bit error rate, in [0, 0.5].
        f_ec: error-correction inefficiency, >= 1 (1 = Shannon limit).
    """

    r_raw: float
    qber: float
    f_ec: float = DEFAULT_F_EC

    def __post_init__(self) -> None:
        if self.r_raw < 0:
            raise ValueError(f"r_raw must be >= 0, got {self.r_raw}")
        if not 0.0 <= self.qber <= 0.5:
            raise ValueError(f"qber must be in [0, 0.5], got {self.qber}")
        if self.f_ec < 1.0:
            raise ValueError(f"f_ec must be >= 1, got {self.f_ec}")


def secret_key_rate(inputs: RateInputs) -> float:
    """Asymptotic secret-key-rate lower bound, in bit/s.

    R_key = (1/2) * R_raw * (1 - f_ec*H2(e) - H2(e)).  The 1/2 prefactor is
    the basis-reconciliation (sifting) factor.  The returned value is signed:
    above the error threshold it goes negative, which the distance-cutoff
    root finder relies on.  Reporting layers clamp to zero.
    """
    h = binary_entropy(inputs.qber)
    return 0.5 * inputs.r_raw * (1.0 - (inputs.f_ec + 1.0) * h)
