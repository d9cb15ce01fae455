"""Marker quality control, median imputation and design-matrix assembly."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import MISSING, N_SOIL, N_WEATHER, SOIL_COLUMNS, WEATHER_COLUMNS, FieldTrialDataset, MarkerMatrix

logger = logging.getLogger(__name__)

FIT_FORMAT_VERSION = 1


class PreprocessError(ValueError):
    pass


def call_rates(values: np.ndarray) -> np.ndarray:
    return (values != MISSING).mean(axis=0)


def minor_allele_frequencies(values: np.ndarray) -> np.ndarray:
    """MAF per marker from non-missing codes; 0 for fully missing markers."""
    aa = (values == 1).sum(axis=0)
    het = (values == 0).sum(axis=0)
    called = (values != MISSING).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        freq_a = (2.0 * aa + het) / (2.0 * called)
    freq_a = np.where(called > 0, freq_a, 0.0)
    return np.minimum(freq_a, 1.0 - freq_a)


def filter_markers(markers: MarkerMatrix, call_rate: float = 0.97, maf: float = 0.01):
    """Drop markers failing the call-rate or minor-allele-frequency threshold.

    Both statistics are computed on the unfiltered matrix, so the kept set is
    the intersection of the two individually filtered sets.

    Returns
    -------
    (MarkerMatrix, numpy.ndarray)
        The filtered matrix and the kept column indices (ascending).
    """
    if markers.n_markers == 0 or markers.n_hybrids == 0:
        raise PreprocessError("marker matrix is empty")
    keep = (call_rates(markers.values) >= call_rate) & (minor_allele_frequencies(markers.values) >= maf)
    kept = np.flatnonzero(keep)
    if len(kept) == 0:
        raise PreprocessError(
            f"every marker failed quality control (call_rate >= {call_rate}, maf >= {maf})")
    return markers.columns(kept), kept


def column_medians(values: np.ndarray) -> np.ndarray:
    """Median of the non-missing codes per column, ties rounded toward 0."""
    neg = (values == -1).sum(axis=0)
    zero = (values == 0).sum(axis=0)
    pos = (values == 1).sum(axis=0)
    n = neg + zero + pos
    if (n == 0).any():
        bad = int(np.flatnonzero(n == 0)[0])
        raise PreprocessError(f"marker column {bad} has no called genotypes to impute from")
    # the two middle order statistics (1-based ranks lo, hi)
    lo, hi = (n + 1) // 2, n // 2 + 1

    def code_at(rank):
        return np.where(rank <= neg, -1, np.where(rank <= neg + zero, 0, 1))

    a, b = code_at(lo), code_at(hi)
    # a + b in {-2..2}; halving and truncating toward zero gives the tie rule
    return np.trunc((a + b) / 2.0).astype(np.int8)


def impute_median(markers: MarkerMatrix, medians: np.ndarray | None = None) -> MarkerMatrix:
    values = markers.values
    if medians is None:
        medians = column_medians(values)
    medians = np.asarray(medians, dtype=np.int8)
    out = np.where(values == MISSING, medians[None, :], values).astype(np.int8)
    return MarkerMatrix(markers.hybrid_ids, out, markers.marker_names)


@dataclass(frozen=True)
class PreprocessFit:
    kept_markers: list[int]
    medians: list[int]
    weather_mean: list[float]
    weather_scale: list[float]
    soil_mean: list[float]
    soil_scale: list[float]
    call_rate: float = 0.97
    maf: float = 0.01
    marker_names: list[str] = field(default_factory=list)
    columns: list[int] | None = None  # optional restriction of design columns

    def __post_init__(self):
        if not set(self.medians) <= {-1, 0, 1}:
            raise PreprocessError("imputation medians must be marker codes")
        if min(self.weather_scale + self.soil_scale, default=1.0) <= 0:
            raise PreprocessError("standardization scales must be positive")

    @property
    def n_markers(self) -> int:
        return len(self.kept_markers)

    @property
    def full_width(self) -> int:
        return self.n_markers + N_WEATHER + N_SOIL

    @property
    def width(self) -> int:
        return self.full_width if self.columns is None else len(self.columns)

    def feature_groups(self) -> np.ndarray:
        """Group label of every design column: 'marker', 'weather' or 'soil'."""
        groups = np.array(["marker"] * self.n_markers + ["weather"] * N_WEATHER + ["soil"] * N_SOIL, dtype=object)
        return groups if self.columns is None else groups[self.columns]

    def feature_names(self) -> list[str]:
        names = list(self.marker_names) or [f"marker_{i}" for i in self.kept_markers]
        names = names + WEATHER_COLUMNS + SOIL_COLUMNS
        return names if self.columns is None else [names[i] for i in self.columns]

    def group_columns(self, *groups: str) -> list[int]:
        """Full-design column indices belonging to the given groups."""
        full = replace(self, columns=None).feature_groups()
        return [int(i) for i in np.flatnonzero(np.isin(full, groups))]

    def restricted(self, columns: Sequence[int] | None) -> PreprocessFit:
        cols = None if columns is None else sorted(int(c) for c in columns)
        if cols is not None and (not cols or cols[0] < 0 or cols[-1] >= self.full_width):
            raise PreprocessError("column restriction out of range")
        return replace(self, columns=cols)

    def to_dict(self) -> dict:
        return {"format_version": FIT_FORMAT_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> PreprocessFit:
        d = dict(d)
        version = d.pop("format_version", None)
        if version != FIT_FORMAT_VERSION:
            raise PreprocessError(f"unsupported preprocessing metadata version {version!r}")
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> PreprocessFit:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _standardizer(block: np.ndarray, names: Sequence[str]):
    mean = block.mean(axis=0)
    sd = block.std(axis=0)
    flat = sd <= 1e-12
    if flat.any():
        logger.warning("zero-variance environment features %s: scale clamped to 1",
                       [names[i] for i in np.flatnonzero(flat)])
        sd = np.where(flat, 1.0, sd)
    return mean, sd


def fit_preprocess(dataset: FieldTrialDataset, call_rate: float = 0.97, maf: float = 0.01) -> PreprocessFit:
    """Fit marker filtering on the genotype panel and standardization on ``dataset`` rows."""
    filtered, kept = filter_markers(dataset.markers, call_rate, maf)
    medians = column_medians(filtered.values)
    wm, ws = _standardizer(dataset.weather, WEATHER_COLUMNS)
    sm, ss = _standardizer(dataset.soil, SOIL_COLUMNS)
    return PreprocessFit(
        kept.tolist(), medians.astype(int).tolist(), wm.tolist(), ws.tolist(), sm.tolist(), ss.tolist(),
        call_rate, maf, filtered.marker_names,
    )


def assemble_design(dataset: FieldTrialDataset, fit: PreprocessFit | None = None, **fit_kw):
    """Build ``[imputed markers | standardized weather | standardized soil]``.

    When ``fit`` is None it is fitted on ``dataset`` (the training rows).
    Returns ``(design, fit)``.
    """
    if fit is None:
        fit = fit_preprocess(dataset, **fit_kw)
    kept = np.asarray(fit.kept_markers, dtype=int)
    if len(kept) and kept.max() >= dataset.markers.n_markers:
        raise PreprocessError("preprocessing fit references markers absent from this genotype panel")
    if fit.marker_names and [dataset.markers.marker_names[i] for i in kept] != list(fit.marker_names):
        raise PreprocessError("marker names under the fit do not match the dataset's genotype panel")

    panel = dataset.markers.values[:, kept]
    medians = np.asarray(fit.medians, dtype=np.int8)
    panel = np.where(panel == MISSING, medians[None, :], panel)
    markers = panel[dataset.marker_rows].astype(np.float64)
    weather = (dataset.weather - np.asarray(fit.weather_mean)) / np.asarray(fit.weather_scale)
    soil = (dataset.soil - np.asarray(fit.soil_mean)) / np.asarray(fit.soil_scale)
    design = np.hstack([markers, weather, soil])
    if fit.columns is not None:
        design = design[:, fit.columns]
    return np.ascontiguousarray(design), fit
