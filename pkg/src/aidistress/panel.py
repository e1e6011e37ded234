"""Firm-year panel assembly, exclusion rules, and distress labeling.

The panel joins financial ratios with AI disclosure features on (firm_id,
year). Financial-industry firms are excluded. Labeling pairs features at the
base year t-2 with the distress flag at year t; firms already flagged at the
base year are dropped, and healthy instances come only from firms never
flagged anywhere in the panel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .lexicon import AI_FEATURE_COLUMNS

FINANCIAL_COLUMNS = ["x01", "x02", "x03", "x04", "x05"]
FEATURES_WITHOUT_AI = list(FINANCIAL_COLUMNS)
FEATURES_WITH_AI = FINANCIAL_COLUMNS + list(AI_FEATURE_COLUMNS)

PANEL_SCHEMA_HEADER = "# aidistress-panel v1"
LABEL_HORIZON = 2  # features at t-2, outcome at t


class PanelError(ValueError):
    """Raised when input rows violate the panel contract."""


@dataclass
class LabeledInstance:
    firm_id: str
    label_year: int
    feature_year: int
    label: int  # 1 distressed, 0 healthy
    features: np.ndarray


@dataclass
class PanelSummary:
    n_observations: int
    n_distressed: int
    distress_rate: float
    prevalence: pd.DataFrame = field(repr=False, default=None)
    class_means: pd.DataFrame = field(repr=False, default=None)


def read_financial_csv(path: str | Path) -> pd.DataFrame:
    """Read firm_id, year, x01..x05 (blank = missing), st_flag, industry_class."""
    df = pd.read_csv(
        path,
        dtype={"firm_id": str, "industry_class": str},
        skipinitialspace=True,
    )
    required = ["firm_id", "year"] + FINANCIAL_COLUMNS + ["st_flag", "industry_class"]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise PanelError(f"financial file {path} lacks columns {missing}")
    df["year"] = df["year"].astype(int)
    df["st_flag"] = df["st_flag"].astype(int).astype(bool)
    for c in FINANCIAL_COLUMNS:
        df[c] = pd.to_numeric(df[c], errors="raise")
    return df[required]


def read_ai_features_csv(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"firm_id": str})
    required = ["firm_id", "year"] + list(AI_FEATURE_COLUMNS)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise PanelError(f"AI feature file {path} lacks columns {missing}")
    df["year"] = df["year"].astype(int)
    return df[required + (["flags"] if "flags" in df.columns else [])]


def _check_unique_keys(df: pd.DataFrame, what: str) -> None:
    dup = df.duplicated(subset=["firm_id", "year"], keep=False)
    if dup.any():
        key = df.loc[dup, ["firm_id", "year"]].iloc[0]
        raise PanelError(
            f"duplicate (firm_id, year) in {what}: ({key['firm_id']}, {key['year']})"
        )


def build_panel(
    financial: pd.DataFrame, ai_features: pd.DataFrame | None = None
) -> pd.DataFrame:
    """Merge financial rows with AI feature rows into one firm-year panel.

    Financial-industry firms are dropped. AI rows that do not join get zeros
    with an ``ai_unjoined`` flag (absent disclosure reads as no activity).
    Missing financial cells are kept as NaN for downstream imputation.
    """
    fin = financial.copy()
    _check_unique_keys(fin, "financial input")
    fin = fin[fin["industry_class"] != "financial"].reset_index(drop=True)

    if ai_features is None:
        ai_features = pd.DataFrame(columns=["firm_id", "year"] + list(AI_FEATURE_COLUMNS))
    else:
        _check_unique_keys(ai_features, "AI feature input")

    ai = ai_features[["firm_id", "year"] + list(AI_FEATURE_COLUMNS)].copy()
    ai["year"] = ai["year"].astype(int) if len(ai) else ai["year"]
    panel = fin.merge(ai, on=["firm_id", "year"], how="left", indicator=True)
    n_unjoined = int((panel["_merge"] == "left_only").sum())
    panel["ai_unjoined"] = panel["_merge"] == "left_only"
    panel = panel.drop(columns="_merge")
    if n_unjoined and len(ai):
        warnings.warn(
            f"{n_unjoined} firm-year rows had no AI feature row; AI fields set to 0",
            stacklevel=2,
        )
    for c in AI_FEATURE_COLUMNS:
        panel[c] = pd.to_numeric(panel[c], errors="coerce").fillna(0.0)
    return panel.sort_values(["firm_id", "year"], kind="stable").reset_index(drop=True)


def label_instances(
    panel: pd.DataFrame,
    feature_columns: list[str] | None = None,
    horizon: int = LABEL_HORIZON,
) -> tuple[list[LabeledInstance], int]:
    """Pair base-year features with the distress flag ``horizon`` years later.

    Returns the instances plus a count of label years skipped because the
    base-year row was absent.
    """
    if feature_columns is None:
        feature_columns = FEATURES_WITH_AI
    missing = [c for c in feature_columns if c not in panel.columns]
    if missing:
        raise PanelError(f"panel lacks feature columns {missing}")

    ever_st = panel.groupby("firm_id")["st_flag"].any()
    by_key = panel.set_index(["firm_id", "year"])
    instances: list[LabeledInstance] = []
    skipped = 0
    for row in panel.itertuples(index=False):
        label_year = row.year
        feature_year = label_year - horizon
        key = (row.firm_id, feature_year)
        if key not in by_key.index:
            skipped += 1
            continue
        base = by_key.loc[key]
        if bool(base["st_flag"]):
            continue  # already distressed at the base year
        if row.st_flag:
            label = 1
        elif not ever_st[row.firm_id]:
            label = 0
        else:
            continue  # flagged elsewhere in the panel: neither class
        feats = base[feature_columns].to_numpy(dtype=float)
        instances.append(
            LabeledInstance(
                firm_id=row.firm_id,
                label_year=int(label_year),
                feature_year=int(feature_year),
                label=label,
                features=feats,
            )
        )
    return instances, skipped


def instances_to_frame(
    instances: list[LabeledInstance], feature_columns: list[str]
) -> pd.DataFrame:
    if not instances:
        return pd.DataFrame(
            columns=["firm_id", "label_year", "feature_year", "label"] + feature_columns
        )
    rows = []
    for inst in instances:
        rec = {
            "firm_id": inst.firm_id,
            "label_year": inst.label_year,
            "feature_year": inst.feature_year,
            "label": inst.label,
        }
        rec.update(dict(zip(feature_columns, inst.features)))
        rows.append(rec)
    return pd.DataFrame(rows)


def write_panel(panel: pd.DataFrame, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(PANEL_SCHEMA_HEADER + "\n")
        panel.to_csv(fh, index=False)


def read_panel(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != PANEL_SCHEMA_HEADER:
            raise PanelError(f"{path}: unrecognized panel header {header!r}")
        df = pd.read_csv(fh, dtype={"firm_id": str})
    df["year"] = df["year"].astype(int)
    df["st_flag"] = df["st_flag"].astype(bool)
    if "ai_unjoined" in df.columns:
        df["ai_unjoined"] = df["ai_unjoined"].astype(bool)
    return df
