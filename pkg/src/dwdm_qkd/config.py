"""Run-configuration files for the command-line tools.

A single TOML file with named sections: ``[source]``, ``[link]``, ``[plan]``,
``[sim]``, ``[analysis]`` and the optional ``[pmd]`` / ``[tuning]`` blocks.
Field names carry unit suffixes (_km, _ps, _s, _hz, _nm, _m) wherever a
quantity is dimensioned; probabilities and efficiencies are dimensionless.

Parse errors surface the file position (from the TOML parser); validation
errors name the offending section and field.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

try:  # py311+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .keyrate import DEFAULT_F_EC
from .linkmodel import LinkParams, SourceParams
from .photonics import ChannelPlan, PmdParams
from .simulator import BellSign, DEFAULT_BIN_WIDTH_PS


class ConfigError(ValueError):
    """A run-configuration file is malformed or inconsistent."""


_KNOWN_SECTIONS = {"source", "link", "plan", "sim", "analysis", "pmd", "tuning"}

_REQUIRED = object()


def _section(raw: dict, name: str, known: set[str], path) -> dict:
    data = raw.get(name, {})
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: [{name}] must be a table")
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"{path}: unknown field(s) in [{name}]: {', '.join(sorted(unknown))}"
        )
    return data


def _get(data: dict, section: str, key: str, kind, path, default=_REQUIRED):
    if key not in data:
        if default is _REQUIRED:
            raise ConfigError(f"{path}: missing required field {section}.{key}")
        return default
    value = data[key]
    try:
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"expected a number, got {type(value).__name__}")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError(f"expected an integer, got {type(value).__name__}")
            return int(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError(f"expected a string, got {type(value).__name__}")
            return value
    except TypeError as exc:
        raise ConfigError(f"{path}: {section}.{key}: {exc}") from exc
    raise AssertionError(f"unsupported kind {kind}")


@dataclass(frozen=True)
class SimSection:
    duration_s: float = 180.0
    seed: int = 1
    bell_sign: BellSign = BellSign.PLUS
    bin_width_ps: float = DEFAULT_BIN_WIDTH_PS
    arm_lengths_km: tuple[float, ...] = (0.0,)
    jitter_sigma_ps: float | None = None
    peak_window_bins: int | None = None
    n_bins: int | None = None


@dataclass(frozen=True)
class AnalysisSection:
    f_ec: float = DEFAULT_F_EC
    peak_window_bins: int | None = None
    background_teeth: int = 4


@dataclass(frozen=True)
class RunConfig:
    source: SourceParams
    link: LinkParams
    plan: ChannelPlan
    sim: SimSection
    analysis: AnalysisSection
    pmd: PmdParams | None = None
    tuning: dict[str, Any] | None = None
    path: Path | None = None


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        # The parser message carries the line/column position.
        raise ConfigError(f"{path}: {exc}") from exc

    unknown = set(raw) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown section(s): {', '.join(sorted(unknown))}")

    source_raw = _section(
        raw, "source", {"mu", "f_rep_hz", "noise_prob", "polarization_error"}, path
    )
    try:
        source = SourceParams(
            mu=_get(source_raw, "source", "mu", float, path),
            f_rep_hz=_get(source_raw, "source", "f_rep_hz", float, path),
            noise_prob=_get(source_raw, "source", "noise_prob", float, path),
            polarization_error=_get(
                source_raw, "source", "polarization_error", float, path
            ),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: source: {exc}") from exc

    link_raw = _section(
        raw,
        "link",
        {
            "collection_efficiency",
            "detector_efficiency",
            "attenuation_db_per_km",
            "arm_length_km",
        },
        path,
    )
    try:
        link = LinkParams(
            collection_efficiency=_get(
                link_raw, "link", "collection_efficiency", float, path
            ),
            detector_efficiency=_get(link_raw, "link", "detector_efficiency", float, path),
            attenuation_db_per_km=_get(
                link_raw, "link", "attenuation_db_per_km", float, path
            ),
            arm_length_km=_get(link_raw, "link", "arm_length_km", float, path, 0.0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: link: {exc}") from exc

    plan_raw = _section(raw, "plan", {"degeneracy_channel", "channel_pairs"}, path)
    center = _get(plan_raw, "plan", "degeneracy_channel", int, path, 25)
    pairs = plan_raw.get("channel_pairs", [[23, 27]])
    if not (
        isinstance(pairs, list)
        and pairs
        and all(isinstance(p, list) and len(p) == 2 for p in pairs)
    ):
        raise ConfigError(f"{path}: plan.channel_pairs must be a list of [alice, bob] pairs")
    try:
        plan = ChannelPlan.from_numbers(center, pairs)
    except ValueError as exc:
        raise ConfigError(f"{path}: plan: {exc}") from exc

    sim_raw = _section(
        raw,
        "sim",
        {
            "duration_s",
            "seed",
            "bell_sign",
            "bin_width_ps",
            "arm_lengths_km",
            "jitter_sigma_ps",
            "peak_window_bins",
            "n_bins",
        },
        path,
    )
    bell_text = _get(sim_raw, "sim", "bell_sign", str, path, "plus")
    try:
        bell_sign = BellSign(bell_text)
    except ValueError as exc:
        raise ConfigError(f"{path}: sim.bell_sign must be 'plus' or 'minus'") from exc
    arms_raw = sim_raw.get("arm_lengths_km", [link.arm_length_km])
    if not isinstance(arms_raw, list) or not arms_raw:
        raise ConfigError(f"{path}: sim.arm_lengths_km must be a non-empty list")
    try:
        arm_lengths = tuple(float(a) for a in arms_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: sim.arm_lengths_km: {exc}") from exc
    if any(a < 0 for a in arm_lengths):
        raise ConfigError(f"{path}: sim.arm_lengths_km entries must be >= 0")
    sim = SimSection(
        duration_s=_get(sim_raw, "sim", "duration_s", float, path, 180.0),
        seed=_get(sim_raw, "sim", "seed", int, path, 1),
        bell_sign=bell_sign,
        bin_width_ps=_get(sim_raw, "sim", "bin_width_ps", float, path, DEFAULT_BIN_WIDTH_PS),
        arm_lengths_km=arm_lengths,
        jitter_sigma_ps=_get(sim_raw, "sim", "jitter_sigma_ps", float, path, None),
        peak_window_bins=_get(sim_raw, "sim", "peak_window_bins", int, path, None),
        n_bins=_get(sim_raw, "sim", "n_bins", int, path, None),
    )
    if sim.duration_s <= 0:
        raise ConfigError(f"{path}: sim.duration_s must be > 0")

    analysis_raw = _section(
        raw, "analysis", {"f_ec", "peak_window_bins", "background_teeth"}, path
    )
    analysis = AnalysisSection(
        f_ec=_get(analysis_raw, "analysis", "f_ec", float, path, DEFAULT_F_EC),
        peak_window_bins=_get(analysis_raw, "analysis", "peak_window_bins", int, path, None),
        background_teeth=_get(analysis_raw, "analysis", "background_teeth", int, path, 4),
    )
    if analysis.f_ec < 1.0:
        raise ConfigError(f"{path}: analysis.f_ec must be >= 1 (Shannon limit)")

    pmd = None
    if "pmd" in raw:
        pmd_raw = _section(
            raw,
            "pmd",
            {"wavelength_nm", "fiber_length_m", "beat_length_mm", "channel_bandwidth_ghz"},
            path,
        )
        try:
            pmd = PmdParams(
                fiber_length_m=_get(pmd_raw, "pmd", "fiber_length_m", float, path),
                beat_length_m=_get(pmd_raw, "pmd", "beat_length_mm", float, path) * 1e-3,
                wavelength_m=_get(pmd_raw, "pmd", "wavelength_nm", float, path) * 1e-9,
                channel_bandwidth_hz=_get(
                    pmd_raw, "pmd", "channel_bandwidth_ghz", float, path, 100.0
                )
                * 1e9,
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{path}: pmd: {exc}") from exc

    tuning = None
    if "tuning" in raw:
        tuning_raw = _section(
            raw,
            "tuning",
            {
                "model_path",
                "pump_start_nm",
                "pump_stop_nm",
                "pump_points",
                "band_lo_nm",
                "band_hi_nm",
                "grid_points",
            },
            path,
        )
        tuning = {
            "model_path": _get(tuning_raw, "tuning", "model_path", str, path),
            "pump_start_nm": _get(tuning_raw, "tuning", "pump_start_nm", float, path),
            "pump_stop_nm": _get(
                tuning_raw,
                "tuning",
                "pump_stop_nm",
                float,
                path,
                _get(tuning_raw, "tuning", "pump_start_nm", float, path),
            ),
            "pump_points": _get(tuning_raw, "tuning", "pump_points", int, path, 1),
            "band_lo_nm": _get(tuning_raw, "tuning", "band_lo_nm", float, path),
            "band_hi_nm": _get(tuning_raw, "tuning", "band_hi_nm", float, path),
            "grid_points": _get(tuning_raw, "tuning", "grid_points", int, path, 2001),
        }

    return RunConfig(
        source=source,
        link=link,
        plan=plan,
        sim=sim,
        analysis=analysis,
        pmd=pmd,
        tuning=tuning,
        path=path,
    )


def load_calibration_inputs(path: str | Path):
    """Load a measured-rates file (TOML ``[measured]`` block)."""
    from .linkmodel import CalibrationInputs

    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    data = _section(
        raw,
        "measured",
        {
            "r_sift_0km",
            "r_sift_far",
            "far_arm_km",
            "r_false_0km",
            "v_tot_0km",
            "r_sift_0km_sigma",
            "v_tot_0km_sigma",
        },
        path,
    )
    return CalibrationInputs(
        r_sift_0km=_get(data, "measured", "r_sift_0km", float, path),
        r_sift_far=_get(data, "measured", "r_sift_far", float, path),
        r_false_0km=_get(data, "measured", "r_false_0km", float, path),
        v_tot_0km=_get(data, "measured", "v_tot_0km", float, path),
        far_arm_km=_get(data, "measured", "far_arm_km", float, path, 25.0),
        r_sift_0km_sigma=_get(data, "measured", "r_sift_0km_sigma", float, path, None),
        v_tot_0km_sigma=_get(data, "measured", "v_tot_0km_sigma", float, path, None),
    )
