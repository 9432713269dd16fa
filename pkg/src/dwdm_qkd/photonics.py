"""Wavelength bookkeeping for the multiplexed entanglement link.

ITU 100 GHz grid arithmetic, symmetric channel pairing around a degeneracy
channel, phase-matched pair-emission tuning curves from user-supplied
effective-index models, and the polarization-mode-dispersion ceiling on the
achievable entanglement visibility.

Effective indices are supplied as data (polynomial curves per guided mode);
nothing here derives them from waveguide geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

try:  # py311+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SPEED_OF_LIGHT_M_S = 299_792_458.0

# 100 GHz ITU grid: f(THz) = 190.0 + 0.1 * channel_number.  Channel width and
# separation are both 100 GHz.  Validated against the anchor channels 23/27 at
# 1558.98 / 1555.75 nm.
ITU_BASE_THZ = 190.0
ITU_STEP_THZ = 0.1
CHANNEL_BANDWIDTH_HZ = 100e9

DEFAULT_CHANNEL_RANGE = (17, 33)


def channel_frequency_thz(number: int, channel_range: tuple[int, int] = DEFAULT_CHANNEL_RANGE) -> float:
    """Center frequency of an ITU 100 GHz grid channel, in THz."""
    lo, hi = channel_range
    if not lo <= number <= hi:
        raise ValueError(f"channel {number} outside the configured plan range {lo}..{hi}")
    return ITU_BASE_THZ + ITU_STEP_THZ * number


def channel_wavelength_nm(number: int, channel_range: tuple[int, int] = DEFAULT_CHANNEL_RANGE) -> float:
    """Center wavelength of an ITU 100 GHz grid channel, in nm."""
    return SPEED_OF_LIGHT_M_S * 1e-3 / channel_frequency_thz(number, channel_range)


def symmetric_partner(plan_center: int, channel: int) -> int:
    """Channel paired with ``channel`` symmetrically about ``plan_center``.

    Energy conservation with a narrowband pump sends the two photons of a pair
    into channels equidistant in frequency from the degeneracy channel.

    Raises:
        ValueError: if ``channel`` is the degeneracy channel itself.
    """
    if channel == plan_center:
        raise ValueError(f"channel {channel} is the degeneracy channel; it has no partner")
    return 2 * plan_center - channel


@dataclass(frozen=True)
class ItuChannel:
    """One ITU 100 GHz grid channel."""

    number: int

    @property
    def center_frequency_thz(self) -> float:
        return ITU_BASE_THZ + ITU_STEP_THZ * self.number

    @property
    def center_wavelength_nm(self) -> float:
        return SPEED_OF_LIGHT_M_S * 1e-3 / self.center_frequency_thz


@dataclass(frozen=True)
class ChannelPlan:
    """Symmetric per-user-pair channel assignment around a degeneracy channel."""

    degeneracy_channel: ItuChannel
    user_pairs: tuple[tuple[ItuChannel, ItuChannel], ...]

    def __post_init__(self) -> None:
        center = self.degeneracy_channel.number
        seen: set[int] = set()
        for alice, bob in self.user_pairs:
            if alice.number + bob.number != 2 * center:
                raise ValueError(
                    f"pair {alice.number}-{bob.number} is not symmetric about channel {center}"
                )
            for ch in (alice.number, bob.number):
                if ch == center:
                    raise ValueError(f"channel {ch} is the degeneracy channel")
                if ch in seen:
                    raise ValueError(f"channel {ch} assigned to two user pairs")
                seen.add(ch)

    @classmethod
    def around(cls, center: int = 25, n_pairs: int = 4) -> "ChannelPlan":
        """Plan with ``n_pairs`` symmetric pairs at offsets 1..n_pairs."""
        pairs = tuple(
            (ItuChannel(center - k), ItuChannel(center + k)) for k in range(1, n_pairs + 1)
        )
        return cls(ItuChannel(center), pairs)

    @classmethod
    def from_numbers(cls, center: int, pairs: Sequence[Sequence[int]]) -> "ChannelPlan":
        return cls(
            ItuChannel(center),
            tuple((ItuChannel(int(a)), ItuChannel(int(b))) for a, b in pairs),
        )


class IndexBandError(ValueError):
    """An effective-index curve was evaluated outside its validity band."""


@dataclass(frozen=True)
class ModeIndex:
    """Effective index of one guided mode vs optical frequency.

    Polynomial in frequency (THz), coefficients in ascending order, valid only
    on ``band_thz``.
    """

    coefficients: tuple[float, ...]
    band_thz: tuple[float, float]
    name: str = ""

    def __post_init__(self) -> None:
        lo, hi = self.band_thz
        if not lo < hi:
            raise ValueError(f"invalid validity band {self.band_thz} for mode {self.name!r}")
        probe = np.linspace(lo, hi, 512)
        values = np.polynomial.polynomial.polyval(probe, np.asarray(self.coefficients))
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError(f"mode {self.name!r} index is not positive and finite over its band")

    def __call__(self, f_thz):
        f = np.asarray(f_thz, dtype=float)
        lo, hi = self.band_thz
        if np.any(f < lo) or np.any(f > hi):
            raise IndexBandError(
                f"frequency outside validity band {lo}..{hi} THz for mode {self.name!r}"
            )
        out = np.polynomial.polynomial.polyval(f, np.asarray(self.coefficients))
        return float(out) if np.isscalar(f_thz) else out


@dataclass(frozen=True)
class IndexModel:
    """Effective-index curves for the three guided modes of the source."""

    pump_bragg_te: ModeIndex
    te00: ModeIndex
    tm00: ModeIndex

    @classmethod
    def from_toml(cls, path: str | Path) -> "IndexModel":
        """Load an index model file.

        Expected layout: a ``[modes.<name>]`` section per mode
        (``pump_bragg_te``, ``te00``, ``tm00``), each with ``coefficients``
        (ascending polynomial in THz) and ``band_thz = [lo, hi]``.
        """
        path = Path(path)
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        modes = raw.get("modes")
        if not isinstance(modes, dict):
            raise ValueError(f"{path}: missing [modes.*] sections")
        loaded = {}
        for name in ("pump_bragg_te", "te00", "tm00"):
            if name not in modes:
                raise ValueError(f"{path}: missing mode section [modes.{name}]")
            section = modes[name]
            try:
                coeffs = tuple(float(c) for c in section["coefficients"])
                band = tuple(float(b) for b in section["band_thz"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: bad mode section [modes.{name}]: {exc}") from exc
            if len(band) != 2:
                raise ValueError(f"{path}: band_thz of [modes.{name}] must be [lo, hi]")
            loaded[name] = ModeIndex(coeffs, (band[0], band[1]), name=name)
        return cls(**loaded)


# Mode assignment of the solved-for photon in a phase-matching branch: the
# process has two branches, one with the lower-frequency photon in TE00 and
# the complementary one with it in TM00.
BRANCHES = ("te", "tm")


@dataclass(frozen=True)
class PhaseMatchSolution:
    """One phase-matched pair of emission wavelengths.

    ``branch`` names the mode carrying the solved-for photon A ("te" or "tm");
    photon B is in the complementary mode at the energy-conserving frequency.
    """

    branch: str
    freq_a_thz: float
    freq_b_thz: float
    lambda_a_nm: float
    lambda_b_nm: float
    residual: float


def phase_match_residual(
    model: IndexModel, branch: str, pump_freq_thz: float, freq_a_thz
):
    """Phase-matching residual n_p*f_p - n_A(f_A)*f_A - n_B(f_p-f_A)*(f_p-f_A).

    Frequencies in THz; the residual carries units of index*THz.  Energy
    conservation is built in through f_B = f_p - f_A.
    """
    if branch not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}")
    n_a, n_b = (model.te00, model.tm00) if branch == "te" else (model.tm00, model.te00)
    f_a = np.asarray(freq_a_thz, dtype=float)
    f_b = pump_freq_thz - f_a
    res = (
        model.pump_bragg_te(pump_freq_thz) * pump_freq_thz
        - n_a(f_a) * f_a
        - n_b(f_b) * f_b
    )
    return float(res) if np.isscalar(freq_a_thz) else res


def tuning_curves(
    index_model: IndexModel,
    pump_wavelength_nm: float,
    search_band_nm: tuple[float, float],
    *,
    grid_points: int = 2001,
    residual_tol: float = 1e-10,
) -> tuple[PhaseMatchSolution, ...]:
    """Solve both phase-matching branches for a given pump wavelength.

    Solutions are found by a sign-change scan of the residual on a frequency
    grid over the search band, refined by bisection.  Energy conservation is
    exact by construction (one free frequency).  An identically-vanishing
    residual (fully dispersionless model) collapses to the degenerate solution
    lambda_A = lambda_B = 2*lambda_p.

    Returns an empty tuple when no root lies in the band.
    """
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    f_pump = SPEED_OF_LIGHT_M_S * 1e-3 / pump_wavelength_nm
    lo_nm, hi_nm = min(search_band_nm), max(search_band_nm)
    f_lo = SPEED_OF_LIGHT_M_S * 1e-3 / hi_nm
    f_hi = SPEED_OF_LIGHT_M_S * 1e-3 / lo_nm
    grid = np.linspace(f_lo, f_hi, grid_points)

    solutions: list[PhaseMatchSolution] = []
    for branch in BRANCHES:
        res = phase_match_residual(index_model, branch, f_pump, grid)
        if np.max(np.abs(res)) < residual_tol:
            # Phase matching adds no constraint; energy conservation alone
            # fixes only the sum, so report the degenerate representative.
            f_half = f_pump / 2.0
            if f_lo <= f_half <= f_hi:
                solutions.append(_solution(branch, f_pump, f_half, 0.0))
            continue
        for i in np.flatnonzero(np.signbit(res[:-1]) != np.signbit(res[1:])):
            root = _bisect_residual(
                index_model, branch, f_pump, grid[i], grid[i + 1], residual_tol
            )
            solutions.append(
                _solution(
                    branch,
                    f_pump,
                    root,
                    phase_match_residual(index_model, branch, f_pump, root),
                )
            )
        for i in np.flatnonzero(res == 0.0):
            solutions.append(_solution(branch, f_pump, float(grid[i]), 0.0))
    solutions.sort(key=lambda s: (s.branch, s.freq_a_thz))
    return tuple(solutions)


def _solution(branch: str, f_pump: float, f_a: float, residual: float) -> PhaseMatchSolution:
    f_a = float(f_a)
    f_b = f_pump - f_a
    c_nm_thz = SPEED_OF_LIGHT_M_S * 1e-3
    return PhaseMatchSolution(
        branch=branch,
        freq_a_thz=f_a,
        freq_b_thz=f_b,
        lambda_a_nm=c_nm_thz / f_a,
        lambda_b_nm=c_nm_thz / f_b,
        residual=float(residual),
    )


def _bisect_residual(model, branch, f_pump, a, b, tol, max_iter=200):
    ga = phase_match_residual(model, branch, f_pump, a)
    mid = 0.5 * (a + b)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        gm = phase_match_residual(model, branch, f_pump, mid)
        if abs(gm) < tol or (b - a) < 1e-12:
            break
        if (ga < 0) == (gm < 0):
            a, ga = mid, gm
        else:
            b = mid
    return mid


@dataclass(frozen=True)
class PmdParams:
    """Inputs for the PMD-limited visibility ceiling.

    The DWDM channel temporal response defaults to a Gaussian whose intensity
    FWHM matches the channel bandwidth; a custom amplitude response can be
    plugged in (callable of time in seconds, with a finite support half-width
    over which it is numerically normalized).
    """

    fiber_length_m: float
    beat_length_m: float
    wavelength_m: float
    channel_bandwidth_hz: float = CHANNEL_BANDWIDTH_HZ
    response: Callable[[np.ndarray], np.ndarray] | None = None
    response_support_s: float | None = None

    def __post_init__(self) -> None:
        if self.fiber_length_m < 0:
            raise ValueError("fiber_length_m must be >= 0")
        if self.beat_length_m <= 0 or self.wavelength_m <= 0 or self.channel_bandwidth_hz <= 0:
            raise ValueError("beat_length_m, wavelength_m and channel_bandwidth_hz must be > 0")
        if self.response is not None and self.response_support_s is None:
            raise ValueError("a custom response needs response_support_s")


@dataclass(frozen=True)
class PmdCeiling:
    tau_pmd_ps: float
    overlap: float
    v_max: float


def gaussian_temporal_sigma_s(bandwidth_hz: float) -> float:
    """Temporal amplitude sigma of a Gaussian channel with the given intensity FWHM."""
    return math.sqrt(math.log(2.0)) / (math.pi * bandwidth_hz)


def pmd_visibility_ceiling(params: PmdParams) -> PmdCeiling:
    """Differential group delay, temporal overlap and visibility ceiling.

    tau_PMD = lambda * L_f / (c * L_b).  The overlap is the correlation of the
    two users' normalized channel temporal responses at that delay,
    eta = integral f_A(t) f_B(tau - t) dt, and the visibility ceiling is
    (1 + eta) / 2.  For the default Gaussian response the overlap is the
    closed form exp(-(pi * B * tau)^2 / (8 ln 2)).
    """
    tau_s = params.wavelength_m * params.fiber_length_m / (SPEED_OF_LIGHT_M_S * params.beat_length_m)
    if params.response is None:
        sigma = gaussian_temporal_sigma_s(params.channel_bandwidth_hz)
        overlap = math.exp(-(tau_s**2) / (8.0 * sigma**2))
    else:
        overlap = _numeric_overlap(params.response, params.response_support_s, tau_s)
    return PmdCeiling(tau_pmd_ps=tau_s * 1e12, overlap=overlap, v_max=(1.0 + overlap) / 2.0)


def _numeric_overlap(response, support_s, tau_s, n_points=200_001):
    # L2-normalize the amplitude response, then correlate it with itself at
    # lag tau.  The grid spans the union of both factors' supports.
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    half = support_s + abs(tau_s)
    t = np.linspace(-half, half, n_points)
    fa = np.asarray(response(t), dtype=float)
    norm = trapezoid(fa * fa, t)
    if norm <= 0 or not np.isfinite(norm):
        raise ValueError("response is not square-integrable on its support")
    fb = np.asarray(response(tau_s - t), dtype=float)
    return float(trapezoid(fa * fb, t) / norm)
