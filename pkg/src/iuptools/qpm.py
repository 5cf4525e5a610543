"""Quasi-phase-matched SPDC wavelength planning for periodically poled LiNbO3.

Signal/idler pairs follow from energy conservation (1/lp = 1/ls + 1/li) and
the collinear first-order type-0 QPM condition

    dk = 2 pi (n_p/lp - n_s/ls - n_i/li - 1/Lambda)    [1/um, lengths in um]

with all indices extraordinary. The dispersion data ships as a plain-text
coefficient table (see data/ppln_mgo5pct_e.txt for the provenance citation);
alternative tables in the same format can be substituted per crystal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "DispersionSet",
    "CrystalState",
    "WavelengthPair",
    "TuningPoint",
    "PhaseMatchError",
    "load_dispersion_set",
    "default_dispersion_set",
    "idler_from_signal",
    "refractive_index",
    "qpm_mismatch",
    "solve_signal_idler",
    "tuning_curve",
    "tuning_table_csv",
]

_DEFAULT_SET_RESOURCE = "ppln_mgo5pct_e.txt"
_SCAN_STEP_NM = 0.5
_ROOT_TOL_NM = 1e-7
_DEGENERATE_TOL = 1e-6  # 1/um


class PhaseMatchError(RuntimeError):
    """No quasi-phase-matched solution in the scanned signal range."""


@dataclass(frozen=True)
class DispersionSet:
    """Named Sellmeier coefficient table with thermal terms and validity window."""

    name: str
    reference: str
    a: tuple[float, float, float, float, float, float]
    b: tuple[float, float, float, float]
    t_offset_c: float
    t_factor: float
    lambda_min_um: float
    lambda_max_um: float
    temp_min_c: float
    temp_max_c: float

    def index_squared(self, wavelength_um, temperature_c: float):
        a1, a2, a3, a4, a5, a6 = self.a
        b1, b2, b3, b4 = self.b
        f = (temperature_c - self.t_offset_c) * (temperature_c + self.t_factor)
        lam2 = np.square(wavelength_um)
        return (
            a1
            + b1 * f
            + (a2 + b2 * f) / (lam2 - np.square(a3 + b3 * f))
            + (a4 + b4 * f) / (lam2 - a5 * a5)
            - a6 * lam2
        )


def _parse_table(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"dispersion table line {lineno}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def load_dispersion_set(path: str | Path) -> DispersionSet:
    """Load a coefficient table from a key/value text file."""
    text = Path(path).read_text(encoding="utf-8")
    return _set_from_mapping(_parse_table(text), str(path))


def _set_from_mapping(values: dict[str, str], source: str) -> DispersionSet:
    try:
        return DispersionSet(
            name=values["name"],
            reference=values.get("reference", ""),
            a=tuple(float(values[f"a{i}"]) for i in range(1, 7)),
            b=tuple(float(values[f"b{i}"]) for i in range(1, 5)),
            t_offset_c=float(values["t_offset_c"]),
            t_factor=float(values["t_factor"]),
            lambda_min_um=float(values["lambda_min_um"]),
            lambda_max_um=float(values["lambda_max_um"]),
            temp_min_c=float(values["temp_min_c"]),
            temp_max_c=float(values["temp_max_c"]),
        )
    except KeyError as missing:
        raise ValueError(f"dispersion table {source} is missing key {missing}") from None


def default_dispersion_set() -> DispersionSet:
    """The bundled 5% MgO-doped congruent LiNbO3 extraordinary-index table."""
    text = (
        resources.files("iuptools.data").joinpath(_DEFAULT_SET_RESOURCE).read_text(encoding="utf-8")
    )
    return _set_from_mapping(_parse_table(text), _DEFAULT_SET_RESOURCE)


@dataclass
class CrystalState:
    """Poling period, oven temperature and the dispersion data in force."""

    poling_period_um: float
    temperature_c: float
    dispersion_set: DispersionSet = field(default_factory=default_dispersion_set)

    def __post_init__(self) -> None:
        if not self.poling_period_um > 0:
            raise ValueError("poling_period_um must be > 0")
        ds = self.dispersion_set
        if not ds.temp_min_c <= self.temperature_c <= ds.temp_max_c:
            raise ValueError(
                f"temperature {self.temperature_c} C outside the validity range "
                f"[{ds.temp_min_c}, {ds.temp_max_c}] C of dispersion set {ds.name}"
            )


@dataclass(frozen=True)
class WavelengthPair:
    """A phase-matched (signal, idler) solution and its residual mismatch."""

    signal_nm: float
    idler_nm: float
    residual_mismatch: float  # |dk| at the solution, 1/um

    @property
    def degenerate(self) -> bool:
        return self.signal_nm == self.idler_nm


@dataclass(frozen=True)
class TuningPoint:
    """One cell of a tuning grid; pair is None where nothing phase-matches."""

    poling_period_um: float
    temperature_c: float
    pair: WavelengthPair | None
    note: str = ""


def idler_from_signal(pump_nm: float, signal_nm: float) -> float:
    """Energy-conservation partner wavelength 1/(1/pump - 1/signal)."""
    if not 0 < pump_nm < signal_nm:
        raise ValueError(
            f"signal ({signal_nm} nm) must exceed the pump ({pump_nm} nm); "
            "both photons carry less energy than the pump"
        )
    return 1.0 / (1.0 / pump_nm - 1.0 / signal_nm)


def refractive_index(wavelength_nm, temperature_c: float, dispersion_set: DispersionSet | None = None):
    """Extraordinary index at the given wavelength(s) and temperature.

    Accepts scalar or array wavelengths (nm). Raises for values outside the
    set's declared validity window.
    """
    ds = dispersion_set if dispersion_set is not None else default_dispersion_set()
    lam_um = np.asarray(wavelength_nm, dtype=np.float64) / 1000.0
    if np.any(lam_um < ds.lambda_min_um) or np.any(lam_um > ds.lambda_max_um):
        raise ValueError(
            f"wavelength outside the validity window "
            f"[{ds.lambda_min_um}, {ds.lambda_max_um}] um of dispersion set {ds.name}"
        )
    if not ds.temp_min_c <= temperature_c <= ds.temp_max_c:
        raise ValueError(
            f"temperature {temperature_c} C outside the validity range "
            f"[{ds.temp_min_c}, {ds.temp_max_c}] C of dispersion set {ds.name}"
        )
    n = np.sqrt(ds.index_squared(lam_um, temperature_c))
    return float(n) if np.isscalar(wavelength_nm) else n


def _mismatch_unchecked(pump_nm: float, signal: np.ndarray, crystal: CrystalState) -> np.ndarray:
    # raw mismatch without validity-window errors: out-of-window wavelengths
    # drive the Sellmeier form negative and come out as NaN, which the
    # bracket scan simply skips
    ds = crystal.dispersion_set
    idler = 1.0 / (1.0 / pump_nm - 1.0 / signal)
    with np.errstate(invalid="ignore", divide="ignore"):
        n_p = np.sqrt(ds.index_squared(pump_nm / 1000.0, crystal.temperature_c))
        n_s = np.sqrt(ds.index_squared(signal / 1000.0, crystal.temperature_c))
        n_i = np.sqrt(ds.index_squared(idler / 1000.0, crystal.temperature_c))
        dk = 2.0 * np.pi * (
            n_p * (1000.0 / pump_nm)
            - n_s * (1000.0 / signal)
            - n_i * (1000.0 / idler)
            - 1.0 / crystal.poling_period_um
        )
    return dk


def qpm_mismatch(pump_nm: float, signal_nm, crystal: CrystalState):
    """Signed collinear first-order QPM mismatch in 1/um.

    The idler follows from energy conservation; signal_nm may be an array.
    Raises for wavelengths outside the dispersion set's validity window.
    """
    ds = crystal.dispersion_set
    signal = np.asarray(signal_nm, dtype=np.float64)
    idler = 1.0 / (1.0 / pump_nm - 1.0 / signal)
    # validity checks (refractive_index raises outside the window)
    refractive_index(pump_nm, crystal.temperature_c, ds)
    refractive_index(signal, crystal.temperature_c, ds)
    refractive_index(idler, crystal.temperature_c, ds)
    dk = _mismatch_unchecked(pump_nm, signal, crystal)
    return float(dk) if np.isscalar(signal_nm) else dk


def _signal_scan_bounds(pump_nm: float, ds: DispersionSet) -> tuple[float, float]:
    # keep signal and the implied idler inside the dispersion validity window;
    # scanning past it puts the Sellmeier form under its poles and yields NaN
    lam_min_nm = ds.lambda_min_um * 1000.0
    lam_max_nm = ds.lambda_max_um * 1000.0
    degenerate = 2.0 * pump_nm
    lo = max(lam_min_nm, pump_nm * 1.01)
    if 1.0 / pump_nm > 1.0 / lam_max_nm:
        lo = max(lo, 1.0 / (1.0 / pump_nm - 1.0 / lam_max_nm))
    hi = min(degenerate, lam_max_nm)
    if not lo < hi:
        raise PhaseMatchError(
            f"no scannable signal range for pump {pump_nm} nm inside dispersion "
            f"window [{ds.lambda_min_um}, {ds.lambda_max_um}] um"
        )
    return lo, hi


def solve_signal_idler(pump_nm: float, crystal: CrystalState) -> WavelengthPair:
    """Find the non-degenerate phase-matched pair for a pump wavelength.

    A 0.5 nm pre-scan of the mismatch over the valid signal range brackets a
    sign change; the root is then polished by Brent's method to better than
    0.01 nm. The mismatch is tangent to zero at degeneracy (its derivative
    vanishes at signal = 2 pump by signal/idler symmetry), so when no sign
    change exists the degenerate point itself is checked before giving up.
    """
    ds = crystal.dispersion_set
    lo, hi = _signal_scan_bounds(pump_nm, ds)
    grid = np.arange(lo, hi, _SCAN_STEP_NM)
    grid = np.append(grid, hi)
    values = _mismatch_unchecked(pump_nm, grid, crystal)
    finite = np.isfinite(values)

    bracket = None
    for i in range(grid.size - 1):
        if not (finite[i] and finite[i + 1]):
            continue
        if values[i] == 0.0:
            return _pair_at(pump_nm, float(grid[i]), crystal)
        if values[i] * values[i + 1] < 0.0:
            bracket = (float(grid[i]), float(grid[i + 1]))
            break

    if bracket is None and hi == 2.0 * pump_nm:
        # tangency fallback: refine near the degenerate edge
        fine = np.linspace(max(lo, hi - 2.0), hi, 401)
        fine_vals = _mismatch_unchecked(pump_nm, fine, crystal)
        ok = np.isfinite(fine_vals)
        for i in range(fine.size - 1):
            if ok[i] and ok[i + 1] and fine_vals[i] * fine_vals[i + 1] < 0.0:
                bracket = (float(fine[i]), float(fine[i + 1]))
                break
        if bracket is None and ok[-1] and abs(float(fine_vals[-1])) <= _DEGENERATE_TOL:
            return WavelengthPair(hi, hi, abs(float(fine_vals[-1])))

    if bracket is None:
        shown = values[finite]
        detail = (
            f"mismatch spans [{shown.min():.6g}, {shown.max():.6g}] 1/um "
            f"over signal {lo:.1f}..{hi:.1f} nm"
            if shown.size
            else "mismatch is not finite anywhere in the scanned range"
        )
        raise PhaseMatchError(
            f"no phase matching for pump {pump_nm} nm at poling period "
            f"{crystal.poling_period_um} um, {crystal.temperature_c} C ({detail})"
        )

    root = brentq(
        lambda s: float(_mismatch_unchecked(pump_nm, np.float64(s), crystal)),
        *bracket,
        xtol=_ROOT_TOL_NM,
    )
    return _pair_at(pump_nm, float(root), crystal)


def _pair_at(pump_nm: float, signal_nm: float, crystal: CrystalState) -> WavelengthPair:
    idler_nm = idler_from_signal(pump_nm, signal_nm)
    residual = abs(float(_mismatch_unchecked(pump_nm, np.float64(signal_nm), crystal)))
    return WavelengthPair(signal_nm, idler_nm, residual)


def tuning_curve(
    pump_nm: float,
    poling_periods_um,
    temperatures_c,
    dispersion_set: DispersionSet | None = None,
) -> list[TuningPoint]:
    """Solve every (poling period, temperature) grid cell, ordered by (period, T).

    Cells without a solution carry pair=None and a note instead of raising.
    """
    ds = dispersion_set if dispersion_set is not None else default_dispersion_set()
    periods = sorted(float(p) for p in poling_periods_um)
    temps = sorted(float(t) for t in temperatures_c)
    if not periods or not temps:
        raise ValueError("poling period and temperature grids must be non-empty")
    points: list[TuningPoint] = []
    for period in periods:
        for temp in temps:
            crystal = CrystalState(period, temp, ds)
            try:
                pair = solve_signal_idler(pump_nm, crystal)
                points.append(TuningPoint(period, temp, pair))
            except PhaseMatchError as err:
                points.append(TuningPoint(period, temp, None, note=str(err)))
    return points


def tuning_table_csv(points: list[TuningPoint]) -> str:
    """Render a tuning grid as CSV (empty wavelength cells where unmatched)."""
    lines = ["poling_period_um,temperature_C,signal_nm,idler_nm,residual"]
    for pt in points:
        if pt.pair is None:
            lines.append(f"{pt.poling_period_um:.4f},{pt.temperature_c:.2f},,,")
        else:
            lines.append(
                f"{pt.poling_period_um:.4f},{pt.temperature_c:.2f},"
                f"{pt.pair.signal_nm:.4f},{pt.pair.idler_nm:.4f},"
                f"{pt.pair.residual_mismatch:.3e}"
            )
    return "\n".join(lines) + "\n"
