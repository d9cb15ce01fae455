"""Trial, genotype, environment and performance tables.

All tables are immutable once built: arrays are flagged read-only and
every invariant is checked at construction time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

N_WEATHER = 72
N_SOIL = 8
MISSING = np.int8(-9)

WEATHER_COLUMNS = [f"w_{i:02d}" for i in range(1, N_WEATHER + 1)]
SOIL_COLUMNS = [f"s_{i}" for i in range(1, N_SOIL + 1)]
PERFORMANCE_COLUMNS = ["hybrid_id", "location_id", "year", "yield", "check_yield"]

_CODE_TEXT = {"-1": -1, "0": 0, "1": 1, "+1": 1, "-1.0": -1, "0.0": 0, "1.0": 1}
_MISSING_TEXT = {"NA", ""}


class DataError(ValueError):
    """Raised for malformed input files or violated table invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def marker_names(p: int) -> list[str]:
    width = max(4, len(str(p)))
    return [f"m_{i:0{width}d}" for i in range(1, p + 1)]


@dataclass(frozen=True)
class MarkerMatrix:
    hybrid_ids: list[str]
    values: np.ndarray
    marker_names: list[str]

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DataError("marker values must be a 2-d matrix")
        if values.shape[0] != len(self.hybrid_ids):
            raise DataError(f"{values.shape[0]} marker rows but {len(self.hybrid_ids)} hybrid ids")
        if values.shape[1] != len(self.marker_names):
            raise DataError(f"{values.shape[1]} marker columns but {len(self.marker_names)} names")
        if len(set(self.hybrid_ids)) != len(self.hybrid_ids):
            raise DataError("duplicate hybrid ids in genotype table")
        values = values.astype(np.int8, copy=False)
        ok = (values == MISSING) | ((values >= -1) & (values <= 1))
        if not ok.all():
            r, c = np.argwhere(~ok)[0]
            raise DataError(f"invalid marker code {values[r, c]} at hybrid {self.hybrid_ids[r]!r}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "hybrid_ids", list(self.hybrid_ids))
        object.__setattr__(self, "marker_names", list(self.marker_names))

    @property
    def n_hybrids(self) -> int:
        return self.values.shape[0]

    @property
    def n_markers(self) -> int:
        return self.values.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return self.values == MISSING

    def columns(self, idx: Sequence[int]) -> MarkerMatrix:
        idx = np.asarray(idx, dtype=int)
        return MarkerMatrix(self.hybrid_ids, self.values[:, idx], [self.marker_names[i] for i in idx])

    def row_index(self) -> dict[str, int]:
        return {h: i for i, h in enumerate(self.hybrid_ids)}


@dataclass(frozen=True)
class EnvironmentTable:
    """Weather per (location, year) and soil per location.

    ``weather`` has one row per entry of ``weather_locations``/``weather_years``;
    ``soil`` has one row per entry of ``location_ids``.
    """

    location_ids: list[str]
    soil: np.ndarray
    weather_locations: list[str]
    weather_years: np.ndarray
    weather: np.ndarray

    def __post_init__(self):
        soil = np.asarray(self.soil, dtype=np.float64)
        weather = np.asarray(self.weather, dtype=np.float64)
        years = np.asarray(self.weather_years, dtype=np.int64)
        if soil.ndim != 2 or soil.shape[1] != N_SOIL:
            raise DataError(f"soil vector length must be {N_SOIL}, got shape {soil.shape}")
        if weather.ndim != 2 or weather.shape[1] != N_WEATHER:
            raise DataError(f"weather vector length must be {N_WEATHER}, got shape {weather.shape}")
        if soil.shape[0] != len(self.location_ids):
            raise DataError("soil rows do not match location ids")
        if weather.shape[0] != len(self.weather_locations) or years.shape != (weather.shape[0],):
            raise DataError("weather rows do not match their (location, year) keys")
        if len(set(self.location_ids)) != len(self.location_ids):
            raise DataError("duplicate location ids in soil table")
        keys = list(zip(self.weather_locations, years.tolist()))
        if len(set(keys)) != len(keys):
            raise DataError("duplicate (location, year) keys in weather table")
        if not (np.isfinite(soil).all() and np.isfinite(weather).all()):
            raise DataError("environment tables must be complete (no missing or non-finite values)")
        object.__setattr__(self, "soil", _frozen(soil))
        object.__setattr__(self, "weather", _frozen(weather))
        object.__setattr__(self, "weather_years", _frozen(years))
        object.__setattr__(self, "location_ids", list(self.location_ids))
        object.__setattr__(self, "weather_locations", list(self.weather_locations))

    def soil_index(self) -> dict[str, int]:
        return {loc: i for i, loc in enumerate(self.location_ids)}

    def weather_index(self) -> dict[tuple[str, int], int]:
        return {(loc, int(y)): i for i, (loc, y) in enumerate(zip(self.weather_locations, self.weather_years))}

    def years_at(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for loc, y in zip(self.weather_locations, self.weather_years.tolist()):
            out.setdefault(loc, []).append(y)
        return {loc: sorted(ys) for loc, ys in out.items()}

    def with_weather(self, locations: Sequence[str], year: int, values: np.ndarray) -> EnvironmentTable:
        """Copy of the table with the weather of ``year`` replaced (or added) per location."""
        values = np.asarray(values, dtype=np.float64)
        idx = self.weather_index()
        weather = self.weather.copy()
        locs = list(self.weather_locations)
        years = self.weather_years.tolist()
        extra = []
        for loc, row in zip(locations, values):
            i = idx.get((loc, int(year)))
            if i is None:
                extra.append((loc, row))
            else:
                weather[i] = row
        if extra:
            weather = np.vstack([weather] + [r[None, :] for _, r in extra])
            locs += [loc for loc, _ in extra]
            years += [int(year)] * len(extra)
        return EnvironmentTable(self.location_ids, self.soil, locs, np.asarray(years), weather)


@dataclass(frozen=True)
class PerformanceTable:
    hybrid_ids: np.ndarray
    location_ids: np.ndarray
    years: np.ndarray
    yields: np.ndarray
    check_yields: np.ndarray

    def __post_init__(self):
        n = len(self.hybrid_ids)
        cols = dict(
            hybrid_ids=np.asarray(self.hybrid_ids, dtype=object),
            location_ids=np.asarray(self.location_ids, dtype=object),
            years=np.asarray(self.years, dtype=np.int64),
            yields=np.asarray(self.yields, dtype=np.float64),
            check_yields=np.asarray(self.check_yields, dtype=np.float64),
        )
        for name, col in cols.items():
            if col.shape != (n,):
                raise DataError(f"performance column {name} has shape {col.shape}, expected ({n},)")
        keys = pd.MultiIndex.from_arrays([cols["hybrid_ids"], cols["location_ids"], cols["years"]])
        if keys.has_duplicates:
            dup = keys[keys.duplicated()][0]
            raise DataError(f"duplicate performance key (hybrid, location, year) = {dup}")
        for name, col in cols.items():
            object.__setattr__(self, name, _frozen(col))

    def __len__(self) -> int:
        return len(self.hybrid_ids)

    @property
    def yield_differences(self) -> np.ndarray:
        return self.yields - self.check_yields


@dataclass(frozen=True)
class FieldTrialDataset:
    """Performance records joined with their marker, weather and soil vectors.

    Marker rows are stored as indices into ``markers`` rather than copied.
    """

    hybrid_ids: np.ndarray
    location_ids: np.ndarray
    years: np.ndarray
    markers: MarkerMatrix
    marker_rows: np.ndarray
    weather: np.ndarray
    soil: np.ndarray
    yields: np.ndarray
    check_yields: np.ndarray
    rejections: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        n = len(self.hybrid_ids)
        if np.asarray(self.weather).shape != (n, N_WEATHER) or np.asarray(self.soil).shape != (n, N_SOIL):
            raise DataError("joined environment blocks have the wrong shape")
        for name in ("hybrid_ids", "location_ids", "years", "marker_rows", "weather", "soil", "yields", "check_yields"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name))))

    @property
    def n(self) -> int:
        return len(self.hybrid_ids)

    def __len__(self) -> int:
        return self.n

    @property
    def yield_differences(self) -> np.ndarray:
        return self.yields - self.check_yields

    def marker_values(self) -> np.ndarray:
        return self.markers.values[self.marker_rows]

    def subset(self, idx) -> FieldTrialDataset:
        idx = np.asarray(idx)
        return FieldTrialDataset(
            self.hybrid_ids[idx], self.location_ids[idx], self.years[idx], self.markers,
            self.marker_rows[idx], self.weather[idx], self.soil[idx], self.yields[idx],
            self.check_yields[idx],
        )

    def keys(self) -> list[tuple[str, str, int]]:
        return list(zip(self.hybrid_ids.tolist(), self.location_ids.tolist(), self.years.tolist()))

    def with_environment(self, environment: EnvironmentTable) -> FieldTrialDataset:
        """Re-resolve every row's weather and soil against another environment table."""
        widx = environment.weather_index()
        sidx = environment.soil_index()
        try:
            wrows = [widx[(loc, int(y))] for loc, y in zip(self.location_ids, self.years)]
            srows = [sidx[loc] for loc in self.location_ids]
        except KeyError as exc:
            raise DataError(f"environment lacks key {exc.args[0]!r}") from None
        return FieldTrialDataset(
            self.hybrid_ids, self.location_ids, self.years, self.markers, self.marker_rows,
            environment.weather[wrows], environment.soil[srows], self.yields, self.check_yields,
        )


@dataclass(frozen=True)
class Rejection:
    row: int
    key: tuple
    reason: str


@dataclass(frozen=True)
class SplitRule:
    """Hold out a seeded fraction of ``cutoff_year`` rows (and every later row).

    With ``disjoint_pairs`` only cutoff-year rows whose (hybrid, location)
    pair never occurs in earlier years are eligible for validation.
    """

    cutoff_year: int = 2016
    validation_fraction: float = 0.5
    seed: int = 0
    disjoint_pairs: bool = True

    def describe(self) -> str:
        pairs = ", (hybrid, location) pairs unseen before the cutoff" if self.disjoint_pairs else ""
        return (f"train: years < {self.cutoff_year} plus the rest of {self.cutoff_year}; "
                f"validation: {self.validation_fraction:g} of {self.cutoff_year}{pairs} "
                f"and all later years (seed {self.seed})")


@dataclass(frozen=True)
class Split:
    train: FieldTrialDataset
    validation: FieldTrialDataset
    rule: str
    train_index: np.ndarray
    validation_index: np.ndarray


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _read_csv(path, **kw) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip", **kw)
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: malformed row: {exc}") from None


def _require_columns(df: pd.DataFrame, path, required: Sequence[str]):
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing required columns {missing}")


def _numeric(df: pd.DataFrame, cols: Sequence[str], path, integer=False) -> np.ndarray:
    block = df[list(cols)].apply(pd.to_numeric, errors="coerce")
    bad = block.isna().to_numpy() & df[list(cols)].notna().to_numpy()
    empty = df[list(cols)].isna().to_numpy()
    bad |= empty
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"{path}: line {r + 2}: column {cols[c]!r} is not a number: {df.iloc[r][cols[c]]!r}")
    out = block.to_numpy(dtype=np.float64)
    if integer:
        if not np.all(out == np.round(out)):
            r, c = np.argwhere(out != np.round(out))[0]
            raise DataError(f"{path}: line {r + 2}: column {cols[c]!r} must be an integer")
        return out.astype(np.int64)
    return out


def read_genotype(path) -> MarkerMatrix:
    df = _read_csv(path, dtype=str, keep_default_na=False)
    _require_columns(df, path, ["hybrid_id"])
    names = [c for c in df.columns if c != "hybrid_id"]
    if not names:
        raise DataError(f"{path}: no marker columns")
    text = np.char.strip(df[names].to_numpy(dtype=str))
    codes = np.full(text.shape, MISSING, dtype=np.int8)
    known = np.isin(text, list(_MISSING_TEXT))
    for s, v in _CODE_TEXT.items():
        hit = text == s
        codes[hit] = v
        known |= hit
    if not known.all():
        r, c = np.argwhere(~known)[0]
        raise DataError(f"{path}: line {r + 2}: marker {names[c]!r} has invalid code {text[r, c]!r}")
    ids = df["hybrid_id"].str.strip().tolist()
    dup = pd.Index(ids).duplicated()
    if dup.any():
        r = int(np.argmax(dup))
        raise DataError(f"{path}: line {r + 2}: duplicate hybrid_id {ids[r]!r}")
    return MarkerMatrix(ids, codes, names)


def read_weather(path):
    """Parse a weather CSV into ``(locations, years, weather)``.

    Extra columns (such as the ``forecast`` marker) are ignored.
    """
    w = _read_csv(path, dtype={"location_id": str})
    _require_columns(w, path, ["location_id", "year"])
    wcols = [c for c in w.columns if c.startswith("w_")]
    if len(wcols) != N_WEATHER:
        raise DataError(f"{path}: weather vector length {len(wcols)} != {N_WEATHER}")
    years = _numeric(w, ["year"], path, integer=True)[:, 0]
    weather = _numeric(w, wcols, path)
    locs = w["location_id"].astype(str).tolist()
    dup = pd.MultiIndex.from_arrays([locs, years]).duplicated()
    if dup.any():
        r = int(np.argmax(dup))
        raise DataError(f"{path}: line {r + 2}: duplicate (location_id, year) {(locs[r], int(years[r]))}")
    return locs, years, weather


def read_environment(weather_path, soil_path) -> EnvironmentTable:
    locs, years, weather = read_weather(weather_path)

    s = _read_csv(soil_path, dtype={"location_id": str})
    _require_columns(s, soil_path, ["location_id"])
    scols = [c for c in s.columns if c.startswith("s_")]
    if len(scols) != N_SOIL:
        raise DataError(f"{soil_path}: soil vector length {len(scols)} != {N_SOIL}")
    soil = _numeric(s, scols, soil_path)
    slocs = s["location_id"].astype(str).tolist()
    dup = pd.Index(slocs).duplicated()
    if dup.any():
        r = int(np.argmax(dup))
        raise DataError(f"{soil_path}: line {r + 2}: duplicate location_id {slocs[r]!r}")
    return EnvironmentTable(slocs, soil, locs, years, weather)


def read_performance(path) -> PerformanceTable:
    df = _read_csv(path, dtype={"hybrid_id": str, "location_id": str})
    _require_columns(df, path, PERFORMANCE_COLUMNS)
    years = _numeric(df, ["year"], path, integer=True)[:, 0]
    vals = _numeric(df, ["yield", "check_yield"], path)
    keys = pd.MultiIndex.from_arrays([df["hybrid_id"], df["location_id"], years])
    dup = keys.duplicated()
    if dup.any():
        r = int(np.argmax(dup))
        raise DataError(f"{path}: line {r + 2}: duplicate key {keys[r]}")
    return PerformanceTable(df["hybrid_id"].to_numpy(object), df["location_id"].to_numpy(object),
                            years, vals[:, 0], vals[:, 1])


def ingest_tables(genotype_path, weather_path, soil_path, performance_path):
    """Parse the four CSV inputs into validated tables.

    Returns ``(MarkerMatrix, EnvironmentTable, PerformanceTable)``.
    """
    for p in (genotype_path, weather_path, soil_path, performance_path):
        if not Path(p).is_file():
            raise FileNotFoundError(p)
    return (read_genotype(genotype_path), read_environment(weather_path, soil_path),
            read_performance(performance_path))


def ingest_dir(directory):
    d = Path(directory)
    return ingest_tables(d / "genotype.csv", d / "weather.csv", d / "soil.csv", d / "performance.csv")


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def _fmt(a: np.ndarray) -> np.ndarray:
    # repr of a float64 round-trips exactly
    return np.array([repr(float(v)) for v in np.ravel(a)], dtype=object).reshape(np.shape(a))


def write_genotype(markers: MarkerMatrix, path):
    text = markers.values.astype(str).astype(object)
    text[markers.missing] = "NA"
    df = pd.DataFrame(text, columns=markers.marker_names)
    df.insert(0, "hybrid_id", markers.hybrid_ids)
    df.to_csv(path, index=False)


def write_weather(locations, years, weather, path, forecast: bool | None = None):
    df = pd.DataFrame(_fmt(np.asarray(weather, dtype=np.float64)), columns=WEATHER_COLUMNS)
    df.insert(0, "year", np.asarray(years, dtype=np.int64))
    df.insert(0, "location_id", list(locations))
    if forecast is not None:
        df["forecast"] = "true" if forecast else "false"
    df.to_csv(path, index=False)


def write_environment(env: EnvironmentTable, weather_path, soil_path):
    write_weather(env.weather_locations, env.weather_years, env.weather, weather_path)
    df = pd.DataFrame(_fmt(env.soil), columns=SOIL_COLUMNS)
    df.insert(0, "location_id", env.location_ids)
    df.to_csv(soil_path, index=False)


def write_performance(perf: PerformanceTable, path):
    df = pd.DataFrame({
        "hybrid_id": perf.hybrid_ids, "location_id": perf.location_ids, "year": perf.years,
        "yield": _fmt(perf.yields), "check_yield": _fmt(perf.check_yields),
    })
    df.to_csv(path, index=False)


def write_tables(directory, markers: MarkerMatrix, env: EnvironmentTable, perf: PerformanceTable) -> dict[str, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / f"{k}.csv" for k in ("genotype", "weather", "soil", "performance")}
    write_genotype(markers, paths["genotype"])
    write_environment(env, paths["weather"], paths["soil"])
    write_performance(perf, paths["performance"])
    return paths


# ---------------------------------------------------------------------------
# joining and splitting
# ---------------------------------------------------------------------------

def join_trials(markers: MarkerMatrix, environment: EnvironmentTable, performance: PerformanceTable) -> FieldTrialDataset:
    """One row per resolvable performance record; the rest go to ``rejections``."""
    hyb = pd.Index(markers.hybrid_ids).get_indexer(performance.hybrid_ids)
    soil = pd.Index(environment.location_ids).get_indexer(performance.location_ids)
    wkeys = pd.MultiIndex.from_arrays([environment.weather_locations, environment.weather_years])
    wrow = wkeys.get_indexer(pd.MultiIndex.from_arrays([performance.location_ids, performance.years]))

    rejections = []
    for i in np.flatnonzero((hyb < 0) | (soil < 0) | (wrow < 0)):
        reasons = []
        if hyb[i] < 0:
            reasons.append("unknown hybrid")
        if soil[i] < 0:
            reasons.append("unknown location (soil)")
        if wrow[i] < 0:
            reasons.append("no weather for (location, year)")
        key = (performance.hybrid_ids[i], performance.location_ids[i], int(performance.years[i]))
        rejections.append(Rejection(int(i), key, "; ".join(reasons)))
    if rejections:
        logger.warning("join rejected %d of %d performance rows", len(rejections), len(performance))

    ok = (hyb >= 0) & (soil >= 0) & (wrow >= 0)
    return FieldTrialDataset(
        performance.hybrid_ids[ok], performance.location_ids[ok], performance.years[ok], markers,
        hyb[ok], environment.weather[wrow[ok]], environment.soil[soil[ok]],
        performance.yields[ok], performance.check_yields[ok], rejections,
    )


def split_by_year(dataset: FieldTrialDataset, rule: SplitRule = SplitRule()) -> Split:
    if dataset.n == 0:
        raise DataError("cannot split an empty dataset")
    if not 0.0 < rule.validation_fraction <= 1.0:
        raise ValueError("validation_fraction must lie in (0, 1]")
    years = dataset.years
    at_cutoff = np.flatnonzero(years == rule.cutoff_year)
    later = np.flatnonzero(years > rule.cutoff_year)

    eligible = at_cutoff
    if rule.disjoint_pairs and len(at_cutoff):
        before = years < rule.cutoff_year
        seen = set(zip(dataset.hybrid_ids[before].tolist(), dataset.location_ids[before].tolist()))
        pairs = zip(dataset.hybrid_ids[at_cutoff].tolist(), dataset.location_ids[at_cutoff].tolist())
        eligible = at_cutoff[np.array([p not in seen for p in pairs], dtype=bool)]

    rng = np.random.default_rng(rule.seed)
    n_val = int(round(rule.validation_fraction * len(eligible)))
    chosen = np.sort(rng.permutation(eligible)[:n_val]) if n_val else np.empty(0, dtype=int)
    val_idx = np.union1d(chosen, later).astype(int)
    if len(val_idx) == 0:
        raise DataError(f"split rule leaves the validation set empty ({rule.describe()})")
    mask = np.ones(dataset.n, dtype=bool)
    mask[val_idx] = False
    train_idx = np.flatnonzero(mask)
    if len(train_idx) == 0:
        raise DataError(f"split rule leaves the training set empty ({rule.describe()})")
    return Split(dataset.subset(train_idx), dataset.subset(val_idx), rule.describe(), train_idx, val_idx)
