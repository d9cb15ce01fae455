"""Seeded synthetic genotype-by-environment trials with known ground truth.

Yield is built from four parts:

* additive effects of a few causal markers (codes -1/0/+1),
* smooth bounded responses to a handful of weather and soil drivers
  (Gaussian "optimum" bumps and tanh saturation, so a linear model is
  mis-specified),
* marker x weather products scaled by ``gxe_strength``,
* Gaussian noise.

Weather follows a per-location AR(1) process around a location mean, which
gives the lagged weather forecaster something to learn.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .data_model import (
    MISSING, N_SOIL, N_WEATHER, EnvironmentTable, MarkerMatrix, PerformanceTable, marker_names,
    write_tables,
)


@dataclass(frozen=True)
class SynthConfig:
    n_hybrids: int = 300
    n_locations: int = 40
    years: tuple[int, int] = (2001, 2016)
    first_trial_year: int = 2012
    hybrids_per_environment: int = 25
    p_markers: int = 1000
    missing_rate: float = 0.02
    allele_freq_range: tuple[float, float] = (0.0, 0.5)
    n_causal_markers: int = 10
    marker_effect: float = 3.0
    weather_effect: float = 12.0
    soil_effect: float = 10.0
    n_weather_drivers: int = 4
    n_soil_drivers: int = 2
    gxe_strength: float = 1.0
    n_gxe_pairs: int = 4
    noise_sd: float = 4.0
    weather_persistence: float = 0.6
    location_weather_sd: float = 1.0
    base_yield: float = 120.0
    seed: int = 0

    def __post_init__(self):
        counts = ("n_hybrids", "n_locations", "hybrids_per_environment", "p_markers")
        for name in counts:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.years[1] < self.years[0]:
            raise ValueError("years must be an increasing (first, last) pair")
        if not self.years[0] <= self.first_trial_year <= self.years[1]:
            raise ValueError("first_trial_year must lie inside the weather year range")
        if not 0 <= self.n_causal_markers <= self.p_markers:
            raise ValueError("n_causal_markers must lie in [0, p_markers]")
        if self.hybrids_per_environment > self.n_hybrids:
            raise ValueError("hybrids_per_environment exceeds n_hybrids")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise ValueError("missing_rate must lie in [0, 1]")
        lo, hi = self.allele_freq_range
        if not 0.0 <= lo <= hi <= 0.5:
            raise ValueError("allele_freq_range must satisfy 0 <= lo <= hi <= 0.5")
        if self.gxe_strength < 0 or self.noise_sd < 0:
            raise ValueError("gxe_strength and noise_sd must be non-negative")
        if not 0 <= self.n_weather_drivers <= N_WEATHER or not 0 <= self.n_soil_drivers <= N_SOIL:
            raise ValueError("driver counts exceed the environment vector lengths")
        if not -1.0 < self.weather_persistence < 1.0:
            raise ValueError("weather_persistence must lie in (-1, 1)")

    @property
    def trial_years(self) -> list[int]:
        return list(range(self.first_trial_year, self.years[1] + 1))


@dataclass
class GroundTruth:
    causal_markers: np.ndarray
    causal_coefficients: np.ndarray
    causal_genotypes: np.ndarray  # true codes before masking, n_hybrids x n_causal
    weather_drivers: np.ndarray
    weather_shapes: list[str]
    weather_centers: np.ndarray
    weather_coefficients: np.ndarray
    soil_drivers: np.ndarray
    soil_shapes: list[str]
    soil_centers: np.ndarray
    soil_coefficients: np.ndarray
    gxe_pairs: np.ndarray  # rows of (position in causal_markers, weather index)
    gxe_strength: float
    base_yield: float
    config: dict = field(default_factory=dict)

    @staticmethod
    def _response(x, shapes, centers, coefs):
        out = np.zeros(x.shape[0])
        for j, (shape, c, a) in enumerate(zip(shapes, centers, coefs)):
            if shape == "bump":
                out += a * np.exp(-0.5 * (x[:, j] - c) ** 2)
            else:
                out += a * np.tanh(x[:, j] - c)
        return out

    def noiseless_yield(self, hybrid_rows, weather, soil) -> np.ndarray:
        """Recompute noise-free yields from true genotypes and environment rows."""
        g = self.causal_genotypes[np.asarray(hybrid_rows)].astype(np.float64)
        weather = np.asarray(weather, dtype=np.float64)
        soil = np.asarray(soil, dtype=np.float64)
        y = self.base_yield + g @ self.causal_coefficients
        y += self._response(weather[:, self.weather_drivers], self.weather_shapes,
                            self.weather_centers, self.weather_coefficients)
        y += self._response(soil[:, self.soil_drivers], self.soil_shapes,
                            self.soil_centers, self.soil_coefficients)
        for pos, w in self.gxe_pairs:
            y += self.gxe_strength * g[:, pos] * weather[:, w]
        return y

    def table(self) -> pd.DataFrame:
        rows = []
        for m, c in zip(self.causal_markers, self.causal_coefficients):
            rows.append(("marker", int(m), float(c), "linear", ""))
        for w, s, c in zip(self.weather_drivers, self.weather_shapes, self.weather_coefficients):
            rows.append(("weather", int(w), float(c), s, ""))
        for w, s, c in zip(self.soil_drivers, self.soil_shapes, self.soil_coefficients):
            rows.append(("soil", int(w), float(c), s, ""))
        for pos, w in self.gxe_pairs:
            rows.append(("gxe", int(self.causal_markers[pos]), float(self.gxe_strength), "product", f"w:{int(w)}"))
        return pd.DataFrame(rows, columns=["group", "feature_index", "coefficient", "form", "partner"])


def _draw_shapes(rng, n):
    shapes = ["bump" if i % 2 == 0 else "tanh" for i in range(n)]
    centers = rng.uniform(-0.5, 0.5, size=n)
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return shapes, centers, signs * rng.uniform(0.7, 1.3, size=n)


def generate_synthetic(config: SynthConfig):
    """Generate ``(MarkerMatrix, EnvironmentTable, PerformanceTable, GroundTruth)``."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    n, p = cfg.n_hybrids, cfg.p_markers

    # genotypes under Hardy-Weinberg; allele A is the minor allele about half the time
    minor = rng.uniform(*cfg.allele_freq_range, size=p)
    freq_a = np.where(rng.random(p) < 0.5, minor, 1.0 - minor)
    true_codes = (rng.binomial(2, freq_a, size=(n, p)) - 1).astype(np.int8)
    observed = true_codes.copy()
    observed[rng.random((n, p)) < cfg.missing_rate] = MISSING

    informative = np.flatnonzero(minor >= 0.1)
    pool = informative if len(informative) >= cfg.n_causal_markers else np.arange(p)
    causal = np.sort(rng.choice(pool, size=cfg.n_causal_markers, replace=False))
    coef_sign = np.where(rng.random(cfg.n_causal_markers) < 0.5, -1.0, 1.0)
    causal_coef = cfg.marker_effect * coef_sign * rng.uniform(0.5, 1.5, size=cfg.n_causal_markers)

    hybrid_ids = [f"H{i:05d}" for i in range(n)]
    location_ids = [f"L{i:04d}" for i in range(cfg.n_locations)]
    years = np.arange(cfg.years[0], cfg.years[1] + 1)

    # weather: location mean + AR(1) deviation per variable
    phi = cfg.weather_persistence
    mu = rng.normal(0.0, cfg.location_weather_sd, size=(cfg.n_locations, N_WEATHER))
    dev = np.empty((cfg.n_locations, len(years), N_WEATHER))
    dev[:, 0] = rng.normal(size=(cfg.n_locations, N_WEATHER))
    for t in range(1, len(years)):
        dev[:, t] = phi * dev[:, t - 1] + np.sqrt(1.0 - phi**2) * rng.normal(size=(cfg.n_locations, N_WEATHER))
    weather = (mu[:, None, :] + dev).reshape(-1, N_WEATHER)
    w_locs = [loc for loc in location_ids for _ in years]
    w_years = np.tile(years, cfg.n_locations)
    soil = rng.normal(size=(cfg.n_locations, N_SOIL))
    env = EnvironmentTable(location_ids, soil, w_locs, w_years, weather)

    w_drivers = np.sort(rng.choice(N_WEATHER, size=cfg.n_weather_drivers, replace=False))
    w_shapes, w_centers, w_coef = _draw_shapes(rng, cfg.n_weather_drivers)
    s_drivers = np.sort(rng.choice(N_SOIL, size=cfg.n_soil_drivers, replace=False))
    s_shapes, s_centers, s_coef = _draw_shapes(rng, cfg.n_soil_drivers)
    n_pairs = min(cfg.n_gxe_pairs, cfg.n_causal_markers, cfg.n_weather_drivers) if cfg.gxe_strength > 0 else 0
    gxe = np.array([(k, w_drivers[k % len(w_drivers)]) for k in range(n_pairs)], dtype=int).reshape(-1, 2)

    truth = GroundTruth(
        causal_markers=causal, causal_coefficients=causal_coef,
        causal_genotypes=true_codes[:, causal].copy(),
        weather_drivers=w_drivers, weather_shapes=w_shapes, weather_centers=w_centers,
        weather_coefficients=cfg.weather_effect * w_coef,
        soil_drivers=s_drivers, soil_shapes=s_shapes, soil_centers=s_centers,
        soil_coefficients=cfg.soil_effect * s_coef,
        gxe_pairs=gxe, gxe_strength=float(cfg.gxe_strength), base_yield=float(cfg.base_yield),
        config=asdict(cfg),
    )

    # trials: a random panel of hybrids in every (location, trial year)
    trial_years = cfg.trial_years
    n_env = cfg.n_locations * len(trial_years)
    h = cfg.hybrids_per_environment
    hyb_rows = np.concatenate([np.sort(rng.choice(n, size=h, replace=False)) for _ in range(n_env)])
    env_loc = np.repeat(np.arange(cfg.n_locations), len(trial_years))
    env_year = np.tile(np.asarray(trial_years), cfg.n_locations)
    row_loc = np.repeat(env_loc, h)
    row_year = np.repeat(env_year, h)
    wrow = row_loc * len(years) + (row_year - years[0])

    y = truth.noiseless_yield(hyb_rows, weather[wrow], soil[row_loc])
    y = y + rng.normal(0.0, cfg.noise_sd, size=y.shape) if cfg.noise_sd > 0 else y
    check = y.reshape(n_env, h).mean(axis=1).repeat(h)

    perf = PerformanceTable(
        np.asarray(hybrid_ids, dtype=object)[hyb_rows],
        np.asarray(location_ids, dtype=object)[row_loc],
        row_year, y, check,
    )
    markers = MarkerMatrix(hybrid_ids, observed, marker_names(p))
    return markers, env, perf, truth


def write_synthetic(directory, markers, env, perf, truth: GroundTruth) -> dict[str, Path]:
    paths = write_tables(directory, markers, env, perf)
    paths["ground_truth"] = Path(directory) / "ground_truth.csv"
    table = truth.table()
    table["coefficient"] = [repr(float(c)) for c in table["coefficient"]]
    table.to_csv(paths["ground_truth"], index=False)
    return paths
