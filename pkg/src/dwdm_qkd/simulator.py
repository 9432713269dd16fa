"""Monte Carlo event-level simulation of the entanglement distribution chain.

Pair emission, Bell-state polarization measurement with systematic error,
loss, spurious clicks and timing jitter, producing time-tagged click streams
and binned coincidence histograms per projective setting.

Emission model: continuous-wave operation is discretized into effective
windows at the source's repetition rate.  Per window, at most one pair is
emitted (probability mu) and each detector may fire spuriously (probability
d).  Each party measures in a random basis per window; a projective-setting
run registers a click only when the basis choice and outcome match that
setting, which reproduces the explicit 1/2 sifting factor of the analytic
model.  Clicks are timestamped at the window start plus Gaussian jitter, so
uncorrelated coincidences pile up at multiples of the window period
("teeth"); the accidental term from multi-pair emission appears in the
cross-window teeth, never at zero delay.

Everything is deterministic given the master seed; each setting owns an
independent RNG stream derived from it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .keyrate import (
    Basis,
    BasisSetting,
    SettingPair,
    parse_any_setting_pair_label,
    same_basis_setting_pairs,
    setting_pair_label,
)
from .linkmodel import LinkParams, SourceParams, arm_efficiency

# Jitter and peak-window defaults, reverse-engineered from the reference
# peak widths (5 bins of 164 ps at short arms, 7 bins at 25 km arms, with the
# peak window covering +-3 sigma of the coincidence-delay spread).
SHORT_ARM_JITTER_PS = 130.0
LONG_ARM_JITTER_PS = 190.0
LONG_ARM_THRESHOLD_KM = 12.5
DEFAULT_BIN_WIDTH_PS = 164.0
DEFAULT_BACKGROUND_TEETH = 4


class BellSign(enum.Enum):
    """Sign of the shared Bell state's superposition phase."""

    PLUS = "plus"
    MINUS = "minus"


class HistogramFormatError(ValueError):
    """A histogram CSV file violates the file contract."""


@dataclass(frozen=True)
class SimConfig:
    """Full configuration of one simulated channel-pair link."""

    source: SourceParams
    link_alice: LinkParams
    link_bob: LinkParams
    duration_s: float
    seed: int
    alice_channel: int = 23
    bob_channel: int = 27
    bell_sign: BellSign = BellSign.PLUS
    bin_width_ps: float = DEFAULT_BIN_WIDTH_PS
    jitter_sigma_ps: float | None = None
    peak_window_bins: int | None = None
    n_bins: int | None = None

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")
        if self.bin_width_ps <= 0:
            raise ValueError("bin_width_ps must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.peak_window_bins is not None and self.peak_window_bins % 2 == 0:
            raise ValueError("peak_window_bins must be odd")
        if self.n_bins is not None and self.n_bins % 2 == 0:
            raise ValueError("n_bins must be odd")
        if self.jitter_sigma_ps is not None and self.jitter_sigma_ps < 0:
            raise ValueError("jitter_sigma_ps must be >= 0")

    @property
    def max_arm_km(self) -> float:
        return max(self.link_alice.arm_length_km, self.link_bob.arm_length_km)

    @property
    def total_km(self) -> float:
        return self.link_alice.arm_length_km + self.link_bob.arm_length_km

    @property
    def window_period_ps(self) -> float:
        return 1e12 / self.source.f_rep_hz

    @property
    def n_windows(self) -> int:
        return int(round(self.source.f_rep_hz * self.duration_s))

    @property
    def resolved_jitter_sigma_ps(self) -> float:
        if self.jitter_sigma_ps is not None:
            return self.jitter_sigma_ps
        return SHORT_ARM_JITTER_PS if self.max_arm_km < LONG_ARM_THRESHOLD_KM else LONG_ARM_JITTER_PS

    @property
    def resolved_peak_window_bins(self) -> int:
        if self.peak_window_bins is not None:
            return self.peak_window_bins
        return 5 if self.max_arm_km < LONG_ARM_THRESHOLD_KM else 7

    @property
    def resolved_n_bins(self) -> int:
        if self.n_bins is not None:
            return self.n_bins
        # Cover the default number of accidental teeth on each side, with
        # margin for the tooth width.
        half = math.ceil(
            DEFAULT_BACKGROUND_TEETH * self.window_period_ps / self.bin_width_ps
            + 3 * self.resolved_peak_window_bins
        )
        return 2 * half + 1


@dataclass(frozen=True)
class DetectionEvent:
    """One registered click of a party's detector during a setting run."""

    timestamp_ps: float
    party: str  # "alice" | "bob"
    setting: BasisSetting
    click: bool = True


@dataclass(eq=False)
class CoincidenceHistogram:
    """Binned Alice-Bob coincidence delays for one projective setting."""

    setting_label: str
    bins: np.ndarray
    bin_width_ps: float
    duration_s: float
    seed: int
    window_period_ps: float | None = None
    alice_channel: int | None = None
    bob_channel: int | None = None
    total_km: float | None = None

    def __post_init__(self) -> None:
        self.bins = np.asarray(self.bins, dtype=np.int64)
        if self.bins.ndim != 1 or self.bins.size % 2 == 0:
            raise ValueError("histogram needs an odd number of bins (symmetric delay window)")
        if np.any(self.bins < 0):
            raise ValueError("histogram counts must be >= 0")
        parse_any_setting_pair_label(self.setting_label)

    @property
    def setting_pair(self) -> SettingPair:
        return parse_any_setting_pair_label(self.setting_label)

    @property
    def n_bins(self) -> int:
        return int(self.bins.size)

    @property
    def center_index(self) -> int:
        return self.n_bins // 2

    def delay_ps(self, index: int) -> float:
        return (index - self.center_index) * self.bin_width_ps

    def write_csv(self, path: str | Path) -> None:
        lines = [
            f"# setting = {self.setting_label}",
            f"# bin_width_ps = {self.bin_width_ps!r}",
            f"# duration_s = {self.duration_s!r}",
            f"# seed = {self.seed}",
        ]
        if self.window_period_ps is not None:
            lines.append(f"# window_period_ps = {self.window_period_ps!r}")
        if self.alice_channel is not None:
            lines.append(f"# alice_channel = {self.alice_channel}")
        if self.bob_channel is not None:
            lines.append(f"# bob_channel = {self.bob_channel}")
        if self.total_km is not None:
            lines.append(f"# total_km = {self.total_km!r}")
        lines.append("bin_index,delay_ps,count")
        for i, count in enumerate(self.bins):
            lines.append(f"{i},{self.delay_ps(i)!r},{int(count)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read_csv(cls, path: str | Path) -> "CoincidenceHistogram":
        path = Path(path)
        meta: dict[str, str] = {}
        counts: list[int] = []
        header_seen = False
        n_rows = 0
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if header_seen:
                        raise HistogramFormatError(
                            f"{path}:{lineno}: metadata after the column header"
                        )
                    if "=" not in line:
                        raise HistogramFormatError(f"{path}:{lineno}: malformed metadata line")
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                    continue
                if not header_seen:
                    if line != "bin_index,delay_ps,count":
                        raise HistogramFormatError(
                            f"{path}:{lineno}: expected header 'bin_index,delay_ps,count'"
                        )
                    header_seen = True
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise HistogramFormatError(f"{path}:{lineno}: expected 3 columns")
                try:
                    index = int(parts[0])
                    count = int(parts[2])
                except ValueError as exc:
                    raise HistogramFormatError(f"{path}:{lineno}: {exc}") from exc
                if index != n_rows:
                    raise HistogramFormatError(
                        f"{path}:{lineno}: bin_index {index} out of order (expected {n_rows})"
                    )
                counts.append(count)
                n_rows += 1
        for key in ("setting", "bin_width_ps", "duration_s", "seed"):
            if key not in meta:
                raise HistogramFormatError(f"{path}: missing metadata key '{key}'")
        if not counts:
            raise HistogramFormatError(f"{path}: no histogram rows")
        try:
            return cls(
                setting_label=meta["setting"],
                bins=np.asarray(counts, dtype=np.int64),
                bin_width_ps=float(meta["bin_width_ps"]),
                duration_s=float(meta["duration_s"]),
                seed=int(meta["seed"]),
                window_period_ps=(
                    float(meta["window_period_ps"]) if "window_period_ps" in meta else None
                ),
                alice_channel=(
                    int(meta["alice_channel"]) if "alice_channel" in meta else None
                ),
                bob_channel=int(meta["bob_channel"]) if "bob_channel" in meta else None,
                total_km=float(meta["total_km"]) if "total_km" in meta else None,
            )
        except ValueError as exc:
            raise HistogramFormatError(f"{path}: {exc}") from exc


# Filesystem-safe slugs for the eight same-basis settings.
SETTING_SLUGS = {
    "00": "00",
    "01": "01",
    "10": "10",
    "11": "11",
    "++": "pp",
    "+-": "pm",
    "-+": "mp",
    "--": "mm",
}
SLUG_TO_LABEL = {slug: label for label, slug in SETTING_SLUGS.items()}


def histogram_filename(setting_label: str) -> str:
    return f"hist_{SETTING_SLUGS[setting_label]}.csv"


def _setting_stream_index(pair: SettingPair) -> int:
    codes = []
    for setting in pair:
        basis_code = 0 if setting.basis is Basis.COMPUTATIONAL else 1
        codes.append(basis_code * 2 + int(setting.outcome))
    return codes[0] * 4 + codes[1]


def _rng_for_setting(seed: int, pair: SettingPair) -> np.random.Generator:
    sequence = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(_setting_stream_index(pair),)
    )
    return np.random.Generator(np.random.PCG64(sequence))


def _distinct_windows(rng: np.random.Generator, n_windows: int, count: int) -> np.ndarray:
    """Uniform random set of ``count`` distinct window indices, in random order."""
    if count > n_windows:
        raise ValueError("more events than emission windows")
    if count == 0:
        return np.empty(0, dtype=np.int64)
    unique = np.unique(rng.integers(0, n_windows, count, dtype=np.int64))
    while unique.size < count:
        extra = rng.integers(0, n_windows, count - unique.size, dtype=np.int64)
        unique = np.unique(np.concatenate([unique, extra]))
    rng.shuffle(unique)
    return unique


def _setting_clicks(
    config: SimConfig, setting_pair: SettingPair, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sorted click timestamps (ps) for Alice and Bob during one setting run."""
    src = config.source
    n_windows = config.n_windows
    period = config.window_period_ps
    sigma_click = config.resolved_jitter_sigma_ps / math.sqrt(2.0)
    eta_a = arm_efficiency(config.link_alice)
    eta_b = arm_efficiency(config.link_bob)
    setting_a, setting_b = setting_pair

    n_pairs = int(rng.binomial(n_windows, src.mu)) if src.mu > 0 else 0

    # Split pairs by which photons survive loss; only survivors can click.
    p_both = eta_a * eta_b
    p_a_only = eta_a * (1.0 - eta_b)
    p_b_only = (1.0 - eta_a) * eta_b
    p_rest = max(0.0, 1.0 - p_both - p_a_only - p_b_only)
    n_both, n_a_only, n_b_only = (
        int(x) for x in rng.multinomial(n_pairs, [p_both, p_a_only, p_b_only, p_rest])[:3]
    )

    # A lone surviving photon clicks iff its random basis matches the setting
    # (1/2) and the projective outcome fires (1/2 marginal).
    n_a_single = int(rng.binomial(n_a_only, 0.25)) if n_a_only else 0
    n_b_single = int(rng.binomial(n_b_only, 0.25)) if n_b_only else 0

    # Pairs with both photons detected: joint Bell-state statistics.
    basis_a = rng.integers(0, 2, n_both)
    basis_b = rng.integers(0, 2, n_both)
    out_a = rng.integers(0, 2, n_both)
    out_cross = rng.integers(0, 2, n_both)
    flip = rng.random(n_both) < src.polarization_error
    # Same-basis outcomes: anti-correlated in the computational basis;
    # correlated in the diagonal basis for the plus state (anti for minus).
    if config.bell_sign is BellSign.PLUS:
        diag = out_a
    else:
        diag = 1 - out_a
    correlated = np.where(basis_a == 0, 1 - out_a, diag)
    correlated = np.where(flip, 1 - correlated, correlated)
    out_b = np.where(basis_a == basis_b, correlated, out_cross)

    code_a = 0 if setting_a.basis is Basis.COMPUTATIONAL else 1
    code_b = 0 if setting_b.basis is Basis.COMPUTATIONAL else 1
    click_a = (basis_a == code_a) & (out_a == int(setting_a.outcome))
    click_b = (basis_b == code_b) & (out_b == int(setting_b.outcome))

    # Emission windows: distinct across all pairs (at most one pair per
    # window); spurious clicks are independent per detector and may share a
    # window with anything else.
    n_carriers = n_a_single + n_b_single + n_both
    pair_windows = _distinct_windows(rng, n_windows, n_carriers)
    w_a_single = pair_windows[:n_a_single]
    w_b_single = pair_windows[n_a_single : n_a_single + n_b_single]
    w_pairs = pair_windows[n_a_single + n_b_single :]

    n_dark_a = int(rng.binomial(n_windows, src.noise_prob)) if src.noise_prob > 0 else 0
    w_dark_a = _distinct_windows(rng, n_windows, n_dark_a)
    n_dark_b = int(rng.binomial(n_windows, src.noise_prob)) if src.noise_prob > 0 else 0
    w_dark_b = _distinct_windows(rng, n_windows, n_dark_b)

    windows_a = np.concatenate([w_a_single, w_pairs[click_a], w_dark_a])
    windows_b = np.concatenate([w_b_single, w_pairs[click_b], w_dark_b])
    times_a = windows_a.astype(np.float64) * period + rng.normal(0.0, sigma_click, windows_a.size)
    times_b = windows_b.astype(np.float64) * period + rng.normal(0.0, sigma_click, windows_b.size)
    times_a.sort()
    times_b.sort()
    return times_a, times_b


def _bin_coincidences(
    times_a: np.ndarray, times_b: np.ndarray, n_bins: int, bin_width_ps: float
) -> np.ndarray:
    """Histogram of Bob-minus-Alice delays over a symmetric window."""
    half = n_bins // 2
    span = (half + 0.5) * bin_width_ps
    lo = np.searchsorted(times_b, times_a - span, side="left")
    hi = np.searchsorted(times_b, times_a + span, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return np.zeros(n_bins, dtype=np.int64)
    starts = np.repeat(lo, counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    delays = times_b[starts + offsets] - np.repeat(times_a, counts)
    bin_idx = np.rint(delays / bin_width_ps).astype(np.int64) + half
    bin_idx = bin_idx[(bin_idx >= 0) & (bin_idx < n_bins)]
    return np.bincount(bin_idx, minlength=n_bins).astype(np.int64)


def simulate_setting(config: SimConfig, setting_pair: SettingPair) -> CoincidenceHistogram:
    """Simulate one projective-setting run and bin its coincidences.

    Deterministic given the config seed; every setting pair owns an
    independent RNG stream derived from the master seed.
    """
    if not (
        isinstance(setting_pair, tuple)
        and len(setting_pair) == 2
        and all(isinstance(s, BasisSetting) for s in setting_pair)
    ):
        raise ValueError("setting_pair must be a (BasisSetting, BasisSetting) tuple")
    rng = _rng_for_setting(config.seed, setting_pair)
    times_a, times_b = _setting_clicks(config, setting_pair, rng)
    bins = _bin_coincidences(times_a, times_b, config.resolved_n_bins, config.bin_width_ps)
    return CoincidenceHistogram(
        setting_label=setting_pair_label(setting_pair),
        bins=bins,
        bin_width_ps=config.bin_width_ps,
        duration_s=config.duration_s,
        seed=config.seed,
        window_period_ps=config.window_period_ps,
        alice_channel=config.alice_channel,
        bob_channel=config.bob_channel,
        total_km=config.total_km,
    )


def simulate_run(config: SimConfig) -> dict[str, CoincidenceHistogram]:
    """Simulate all eight same-basis settings, keyed by setting label."""
    run: dict[str, CoincidenceHistogram] = {}
    for pair in same_basis_setting_pairs():
        histogram = simulate_setting(config, pair)
        run[histogram.setting_label] = histogram
    return run


def detection_events(
    config: SimConfig, setting_pair: SettingPair
) -> tuple[list[DetectionEvent], list[DetectionEvent]]:
    """Time-ordered click streams for both parties during one setting run.

    Same RNG stream as :func:`simulate_setting`: the events are exactly the
    clicks behind that setting's histogram.
    """
    rng = _rng_for_setting(config.seed, setting_pair)
    times_a, times_b = _setting_clicks(config, setting_pair, rng)
    setting_a, setting_b = setting_pair
    alice = [DetectionEvent(float(t), "alice", setting_a) for t in times_a]
    bob = [DetectionEvent(float(t), "bob", setting_b) for t in times_b]
    return alice, bob


def write_run(run: dict[str, CoincidenceHistogram], directory: str | Path) -> list[Path]:
    """Write one histogram CSV per setting into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for label, histogram in run.items():
        path = directory / histogram_filename(label)
        histogram.write_csv(path)
        paths.append(path)
    return paths


def read_run(directory: str | Path) -> dict[str, CoincidenceHistogram]:
    """Read a full 8-setting histogram run from ``directory``.

    Raises:
        FileNotFoundError: naming every missing setting.
    """
    directory = Path(directory)
    run: dict[str, CoincidenceHistogram] = {}
    missing = []
    for label, slug in SETTING_SLUGS.items():
        path = directory / f"hist_{slug}.csv"
        if not path.exists():
            missing.append(label)
            continue
        run[label] = CoincidenceHistogram.read_csv(path)
    if missing:
        raise FileNotFoundError(
            f"{directory}: missing histogram settings: {', '.join(missing)}"
        )
    return run
