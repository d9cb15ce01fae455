"""Metrics, error breakdowns, distribution summaries and report assembly.

Variances and covariances use the sample (n - 1) convention throughout.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy.stats import hypergeom

from .container import canonical_json

RESPONSES = ("yield", "check_yield", "yield_difference")
VARIANCE_CONVENTION = "sample (n - 1)"

# external reference values shown for context only; never asserted
REFERENCE_YIELD_MEAN = 116.51
REFERENCE_YIELD_SD = 27.7
REFERENCE_DNN_YIELD = {"validation_rmse": 12.79, "validation_pearson": 81.91}
REFERENCE_LABEL = "reference (external, not reproduced)"


class Metrics(NamedTuple):
    rmse: float
    pearson_percent: float
    degenerate: bool


def metrics(predictions, targets) -> Metrics:
    """RMSE and 100 x Pearson correlation.

    A constant series on either side makes the correlation undefined; it is
    reported as 0 with ``degenerate=True``.
    """
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"predictions {p.shape} and targets {t.shape} must be equal-length vectors")
    if len(p) == 0:
        raise ValueError("metrics need at least one row")
    rmse = float(np.sqrt(np.mean((p - t) ** 2)))
    pc, tc = p - p.mean(), t - t.mean()
    denom = float(np.sqrt((pc @ pc) * (tc @ tc)))
    if len(p) < 2 or denom == 0.0 or np.ptp(p) == 0.0 or np.ptp(t) == 0.0:
        return Metrics(rmse, 0.0, True)
    r = float(np.clip((pc @ tc) / denom, -1.0, 1.0))
    return Metrics(rmse, 100.0 * r, False)


@dataclass(frozen=True)
class MetricsRow:
    model: str
    response: str
    train_rmse: float
    train_pearson: float
    validation_rmse: float
    validation_pearson: float
    label: str = ""

    def __post_init__(self):
        if self.response not in RESPONSES:
            raise ValueError(f"response must be one of {RESPONSES}")


def triplet_rows(model: str, train_pred, train_data, val_pred, val_data, label: str = "") -> list[MetricsRow]:
    """Three rows (yield, check yield, yield difference) from prediction triplets."""
    rows = []
    for response, attr, target in (("yield", "yields", "yields"), ("check_yield", "checks", "check_yields"),
                                   ("yield_difference", "difference", "yield_differences")):
        mt = metrics(getattr(train_pred, attr), getattr(train_data, target))
        mv = metrics(getattr(val_pred, attr), getattr(val_data, target))
        rows.append(MetricsRow(model, response, mt.rmse, mt.pearson_percent, mv.rmse, mv.pearson_percent, label))
    return rows


@dataclass(frozen=True)
class LocationErrors:
    table: pd.DataFrame  # location_id, n, rmse
    threshold: float
    n_below: int

    @property
    def n_locations(self) -> int:
        return len(self.table)


def per_location_errors(predictions, targets, location_ids, threshold: float = 15.0) -> LocationErrors:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    locs = np.asarray(location_ids, dtype=object)
    if not p.shape == t.shape == locs.shape:
        raise ValueError("predictions, targets and location ids must have equal length")
    df = pd.DataFrame({"location_id": locs, "sq": (p - t) ** 2})
    g = df.groupby("location_id", sort=True)["sq"]
    table = pd.DataFrame({"n": g.size(), "rmse": np.sqrt(g.mean())}).reset_index()
    return LocationErrors(table, float(threshold), int((table["rmse"] < threshold).sum()))


class IdentityCheck(NamedTuple):
    var_difference: float
    var_expansion: float
    relative_gap: float


def variance_identity_check(y, y_c) -> IdentityCheck:
    """Var(y - y_c) against Var(y) + Var(y_c) - 2 Cov(y, y_c)."""
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(y_c, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    lhs = float(np.var(a - b, ddof=1))
    cov = np.cov(a, b, ddof=1)
    rhs = float(cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1])
    scale = max(abs(lhs), abs(rhs), float(cov[0, 0] + cov[1, 1]))
    gap = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return IdentityCheck(lhs, rhs, gap)


def overlap_pvalue(population: int, planted: int, selected: int, overlap: int) -> float:
    """P(at least ``overlap`` planted items among ``selected`` drawn without replacement)."""
    if not 0 <= planted <= population or not 0 <= selected <= population:
        raise ValueError("planted and selected counts must lie in [0, population]")
    return float(hypergeom.sf(overlap - 1, population, planted, selected))


@dataclass(frozen=True)
class DistributionSummary:
    table: pd.DataFrame
    prediction_variance: float
    target_variance: float

    @property
    def prediction_variance_smaller(self) -> bool:
        return self.prediction_variance <= self.target_variance


def distribution_summary(predictions, targets, n_bins: int = 20) -> DistributionSummary:
    """Paired histograms on common bins over the joint range."""
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    lo, hi = float(min(p.min(), t.min())), float(max(p.max(), t.max()))
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    cp, _ = np.histogram(p, edges)
    ct, _ = np.histogram(t, edges)
    table = pd.DataFrame({
        "bin_left": edges[:-1], "bin_right": edges[1:],
        "count_predicted": cp, "count_target": ct,
        "density_predicted": cp / cp.sum(), "density_target": ct / ct.sum(),
    })
    return DistributionSummary(table, float(np.var(p, ddof=1)) if len(p) > 1 else 0.0,
                               float(np.var(t, ddof=1)) if len(t) > 1 else 0.0)


@dataclass
class Report:
    metric_rows: list[MetricsRow]
    ablation_rows: list[dict] = field(default_factory=list)
    identity_checks: dict[str, IdentityCheck] = field(default_factory=dict)
    per_location: dict[str, LocationErrors] = field(default_factory=dict)
    distributions: dict[str, DistributionSummary] = field(default_factory=dict)
    effects: pd.DataFrame | None = None
    notes: list[str] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)


def _write_csv(df: pd.DataFrame, path: Path):
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def build_report(report: Report, directory) -> dict[str, Path]:
    """Write the CSV set plus ``summary.md`` and ``report_manifest.json``."""
    if not report.metric_rows:
        raise ValueError("a report needs at least one metrics row")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = {}
    metrics_df = pd.DataFrame([asdict(r) for r in report.metric_rows])
    out["metrics"] = d / "metrics.csv"
    _write_csv(metrics_df, out["metrics"])
    out["ablation"] = d / "ablation.csv"
    abl = pd.DataFrame(report.ablation_rows, columns=None if report.ablation_rows else
                       ["source", "n_features", "train_rmse", "train_pearson", "validation_rmse",
                        "validation_pearson"])
    _write_csv(abl, out["ablation"])
    if report.per_location:
        frames = [le.table.assign(model=name) for name, le in sorted(report.per_location.items())]
        out["per_location"] = d / "per_location.csv"
        _write_csv(pd.concat(frames, ignore_index=True)[["model", "location_id", "n", "rmse"]], out["per_location"])
    if report.distributions:
        frames = [ds.table.assign(model=name) for name, ds in sorted(report.distributions.items())]
        out["distribution"] = d / "distribution.csv"
        _write_csv(pd.concat(frames, ignore_index=True), out["distribution"])
    if report.identity_checks:
        out["identity"] = d / "variance_identity.csv"
        _write_csv(pd.DataFrame([{"model": k, **v._asdict()} for k, v in sorted(report.identity_checks.items())]),
                   out["identity"])
    if report.effects is not None:
        out["effects"] = d / "effects.csv"
        _write_csv(report.effects, out["effects"])
    out["summary"] = d / "summary.md"
    out["summary"].write_text(_summary(report, metrics_df, abl))
    out["manifest"] = d / "report_manifest.json"
    out["manifest"].write_text(canonical_json({"variance_convention": VARIANCE_CONVENTION,
                                               "files": sorted(p.name for p in out.values()),
                                               **report.manifest}))
    return out


def _table(df: pd.DataFrame, cols: Sequence[str]) -> list[str]:
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for _, r in df.iterrows():
        lines.append("| " + " | ".join(f"{r[c]:.2f}" if isinstance(r[c], float) else str(r[c]) for c in cols) + " |")
    return lines


def _summary(report: Report, metrics_df: pd.DataFrame, abl: pd.DataFrame) -> str:
    lines = ["# Yield prediction report", "", f"Variance convention: {VARIANCE_CONVENTION}.", ""]
    lines += ["## Metrics", ""]
    lines += _table(metrics_df, ["model", "response", "train_rmse", "train_pearson", "validation_rmse",
                                 "validation_pearson", "label"])
    lines += ["", "## Single-source ablation", ""]
    lines += _table(abl, list(abl.columns)) if len(abl) else ["(none)"]
    if report.identity_checks:
        lines += ["", "## Variance identity", ""]
        for name, c in sorted(report.identity_checks.items()):
            lines.append(f"- {name}: Var(d) = {c.var_difference:.6g}, expansion = {c.var_expansion:.6g}, "
                         f"relative gap = {c.relative_gap:.3e}")
    if report.per_location:
        lines += ["", "## Per-location errors", ""]
        for name, le in sorted(report.per_location.items()):
            lines.append(f"- {name}: {le.n_below} of {le.n_locations} locations with RMSE below {le.threshold:g}")
    if report.distributions:
        lines += ["", "## Prediction spread", ""]
        for name, ds in sorted(report.distributions.items()):
            lines.append(f"- {name}: predicted variance {ds.prediction_variance:.4g}, "
                         f"target variance {ds.target_variance:.4g}, "
                         f"predicted <= target: {ds.prediction_variance_smaller}")
    if report.notes:
        lines += ["", "## Notes", ""] + [f"- {n}" for n in report.notes]
    lines += ["", f"## {REFERENCE_LABEL}", "",
              f"- yield mean +- sd: {REFERENCE_YIELD_MEAN} +- {REFERENCE_YIELD_SD}",
              f"- DNN yield: validation RMSE {REFERENCE_DNN_YIELD['validation_rmse']}, "
              f"validation correlation {REFERENCE_DNN_YIELD['validation_pearson']}%", ""]
    return "\n".join(lines)
