"""Next-year weather forecasting from a lag window of earlier years.

One shallow network per weather variable, shared by all locations, maps
the values of the ``lag`` preceding years at a location to the value in
the following year.  Soil is static and never forecast.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .container import load_container, save_container
from .data_model import N_WEATHER, DataError, EnvironmentTable, write_weather
from .nn import NetworkSpec, TrainConfig, TrainedNetwork, fit_network

logger = logging.getLogger(__name__)

DEFAULT_LAG = 4
BUNDLE_KIND = "weather_forecaster"
WEATHER_TRAIN_CONFIG = TrainConfig(base_lr=3e-3, lr_halving_period=1000, batch_size=64, max_iterations=2000,
                                   l1_lambda=0.0, l2_lambda=1e-5, log_every=0, seed=0)


class ForecastError(DataError):
    pass


@dataclass(frozen=True)
class LagSampleSet:
    """Lag windows pooled over locations.

    ``inputs[:, j, w]`` holds variable ``w`` in year ``target - (j + 1)``,
    so column 0 is the most recent year.
    """

    inputs: np.ndarray  # (n, lag, 72)
    targets: np.ndarray  # (n, 72)
    locations: list[str]
    target_years: np.ndarray
    lag: int

    def __len__(self) -> int:
        return len(self.locations)

    def variable(self, w: int) -> tuple[np.ndarray, np.ndarray]:
        return self.inputs[:, :, w], self.targets[:, w]

    def where(self, mask) -> LagSampleSet:
        mask = np.asarray(mask, dtype=bool)
        return LagSampleSet(self.inputs[mask], self.targets[mask],
                            [loc for loc, m in zip(self.locations, mask) if m], self.target_years[mask], self.lag)


def _lag_rows(env: EnvironmentTable, location: str, year: int, lag: int, index) -> list[int] | None:
    rows = [index.get((location, year - j)) for j in range(1, lag + 1)]
    return None if any(r is None for r in rows) else rows


def build_lag_samples(env: EnvironmentTable, lag: int = DEFAULT_LAG, until_year: int | None = None) -> LagSampleSet:
    """One sample per (location, year) that has all ``lag`` preceding years.

    ``until_year`` drops targets after that year (for backtests).
    """
    if lag < 1:
        raise ValueError("lag must be at least 1")
    index = env.weather_index()
    target_rows, lag_rows, locs, years = [], [], [], []
    for loc, ys in env.years_at().items():
        for y in ys:
            if until_year is not None and y > until_year:
                continue
            rows = _lag_rows(env, loc, y, lag, index)
            if rows is not None:
                target_rows.append(index[(loc, y)])
                lag_rows.append(rows)
                locs.append(loc)
                years.append(y)
    if not target_rows:
        raise ForecastError(f"no location has more than {lag} consecutive years of weather")
    inputs = env.weather[np.asarray(lag_rows)]
    return LagSampleSet(inputs, env.weather[target_rows], locs, np.asarray(years, dtype=np.int64), lag)


@dataclass(frozen=True)
class ForecastConfig:
    lag: int = DEFAULT_LAG
    hidden_width: int = 10
    activation: str = "tanh"
    train: TrainConfig = field(default_factory=lambda: WEATHER_TRAIN_CONFIG)

    def spec(self) -> NetworkSpec:
        return NetworkSpec(input_dim=self.lag, hidden_layers=1, hidden_width=self.hidden_width,
                           activation=self.activation, residual=False, batchnorm=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d


def variable_seed(seed: int, w: int) -> int:
    """Seed of variable ``w``'s network; independent of every other variable."""
    return int(np.random.SeedSequence([seed, w]).generate_state(1)[0])


@dataclass
class WeatherForecaster:
    networks: list[TrainedNetwork]
    input_mean: np.ndarray
    input_scale: np.ndarray
    config: ForecastConfig

    def __post_init__(self):
        if len(self.networks) != N_WEATHER:
            raise ValueError(f"a forecaster holds exactly {N_WEATHER} networks, got {len(self.networks)}")

    @property
    def lag(self) -> int:
        return self.config.lag

    def predict(self, lags: np.ndarray) -> np.ndarray:
        """Forecast from windows shaped ``(n, lag, 72)``; returns ``(n, 72)``."""
        lags = np.asarray(lags, dtype=np.float64)
        if lags.ndim != 3 or lags.shape[1:] != (self.lag, N_WEATHER):
            raise ValueError(f"lag windows must have shape (n, {self.lag}, {N_WEATHER}), got {lags.shape}")
        z = (lags - self.input_mean) / self.input_scale
        return np.column_stack([net.predict(z[:, :, w]) for w, net in enumerate(self.networks)])

    def save(self, path):
        metas, arrays = [], {}
        for w, net in enumerate(self.networks):
            meta, arr = net.to_container(prefix=f"w{w + 1:02d}.")
            metas.append(meta)
            arrays.update(arr)
        arrays["input_mean"] = self.input_mean
        arrays["input_scale"] = self.input_scale
        save_container(path, {"config": self.config.to_dict(), "networks": metas}, arrays, BUNDLE_KIND)

    @classmethod
    def load(cls, path) -> WeatherForecaster:
        meta, arrays = load_container(path, BUNDLE_KIND)
        cfg = dict(meta["config"])
        cfg["train"] = TrainConfig(**cfg["train"])
        nets = [TrainedNetwork.from_container(m, {k: v for k, v in arrays.items() if k.startswith(f"w{w + 1:02d}.")},
                                              prefix=f"w{w + 1:02d}.")
                for w, m in enumerate(meta["networks"])]
        return cls(nets, arrays["input_mean"], arrays["input_scale"], ForecastConfig(**cfg))


def train_forecasters(samples: LagSampleSet, config: ForecastConfig = ForecastConfig()) -> WeatherForecaster:
    """Fit one shallow network per weather variable on the pooled lag samples.

    Lag inputs are standardized per variable with statistics of ``samples``;
    a constant variable gets a constant predictor.
    """
    if len(samples) == 0:
        raise ForecastError("empty lag sample set")
    if samples.lag != config.lag:
        raise ValueError(f"samples use lag {samples.lag}, config expects {config.lag}")
    mean = samples.inputs.mean(axis=(0, 1))
    scale = samples.inputs.std(axis=(0, 1))
    scale = np.where(scale > 1e-12, scale, 1.0)
    spec = config.spec()
    nets = []
    for w in range(N_WEATHER):
        x, y = samples.variable(w)
        train_cfg = replace(config.train, seed=variable_seed(config.train.seed, w))
        nets.append(fit_network(spec, train_cfg, (x - mean[w]) / scale[w], y))
    return WeatherForecaster(nets, mean, scale, config)


@dataclass(frozen=True)
class YearForecast:
    year: int
    locations: list[str]
    weather: np.ndarray  # (len(locations), 72)
    lacking_window: list[str]

    def write(self, path):
        write_weather(self.locations, [self.year] * len(self.locations), self.weather, path, forecast=True)


def forecast_year(forecaster: WeatherForecaster, env: EnvironmentTable, target_year: int,
                  locations=None) -> YearForecast:
    """Forecast ``target_year`` for every location (or the given ones).

    Locations without the full lag window are listed in ``lacking_window``;
    it is an error if no location can be forecast.
    """
    index = env.weather_index()
    candidates = env.location_ids if locations is None else list(locations)
    ok, rows, lacking = [], [], []
    for loc in candidates:
        r = _lag_rows(env, loc, target_year, forecaster.lag, index)
        if r is None:
            lacking.append(loc)
        else:
            ok.append(loc)
            rows.append(r)
    if lacking:
        logger.warning("%d locations lack the %d-year window before %d: %s",
                       len(lacking), forecaster.lag, target_year, lacking[:5])
    if not ok:
        raise ForecastError(f"no location has the {forecaster.lag} years of weather before {target_year}")
    pred = forecaster.predict(env.weather[np.asarray(rows)])
    return YearForecast(int(target_year), ok, pred, lacking)


def repeat_last_year(env: EnvironmentTable, target_year: int, locations) -> np.ndarray:
    """Naive forecast: the previous year's weather at each location."""
    index = env.weather_index()
    try:
        return env.weather[[index[(loc, target_year - 1)] for loc in locations]]
    except KeyError as exc:
        raise ForecastError(f"no weather for {exc.args[0]!r}") from None


def substitute_forecast(env: EnvironmentTable, forecast: YearForecast) -> EnvironmentTable:
    return env.with_weather(forecast.locations, forecast.year, forecast.weather)


@dataclass(frozen=True)
class Backtest:
    year: int
    n_locations: int
    rmse: float
    naive_rmse: float
    per_variable_rmse: np.ndarray


def backtest(env: EnvironmentTable, target_year: int, config: ForecastConfig = ForecastConfig()) -> Backtest:
    """Train on targets before ``target_year`` and score the forecast of that year."""
    samples = build_lag_samples(env, config.lag, until_year=target_year - 1)
    forecaster = train_forecasters(samples, config)
    fc = forecast_year(forecaster, env, target_year)
    index = env.weather_index()
    have = [i for i, loc in enumerate(fc.locations) if (loc, target_year) in index]
    if not have:
        raise ForecastError(f"no observed weather in {target_year} to score against")
    locs = [fc.locations[i] for i in have]
    truth = env.weather[[index[(loc, target_year)] for loc in locs]]
    err = fc.weather[have] - truth
    naive = repeat_last_year(env, target_year, locs) - truth
    return Backtest(int(target_year), len(locs), float(np.sqrt(np.mean(err**2))),
                    float(np.sqrt(np.mean(naive**2))), np.sqrt(np.mean(err**2, axis=0)))
