"""Seeded synthetic firm-year panel generator with planted ground truth.

Firms carry a latent quality score. Financial ratios load on quality, AI
adoption follows a logistic ramp over calendar years whose midpoint is earlier
for high-quality firms, and distress onset is Bernoulli on a latent log-odds
combining standardized base-year ratios and an AI adoption term. Once flagged,
a firm stays flagged for a geometric number of years (mean 2). The intercept
is calibrated by bisection so the expected flagged-year share matches the
target distress rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .lexicon import AI_FEATURE_COLUMNS, MDNA_MARKER, NARRATIVE_MARKER
from .panel import FINANCIAL_COLUMNS, PanelSummary

# Each default is tagged with its anchor: a reported aggregate it was tuned
# against, or "uncalibrated choice" when the source material gives no number.
GENERATOR_DEFAULTS = {
    "n_firms": (2037, "16-year balanced panel of 2,037 firms gives 32,592 rows, "
                      "matching the reported panel size to within one row"),
    "year_start": (2008, "reported sample start"),
    "year_end": (2023, "reported sample end"),
    "distress_rate": (0.0326, "reported 3.26% distressed share"),
    "st_persistence": (0.5, "geometric flag duration with mean 2 years"),
    "adopt_midpoint_healthy": (2015.0, "calibrated with the ceiling so pooled "
                                       "2020-21 adoption is about one half"),
    "adopt_midpoint_distressed": (2020.0, "healthy firms adopt earlier"),
    "adopt_slope": (0.5, "uncalibrated choice"),
    "adopt_ceiling": (0.67, "calibrated: pooled 2020-21 nonzero-AI share 50%"),
    "signal_strength": (3.5, "uncalibrated choice, strong enough for the "
                             "planted signal to be recoverable"),
    "missing_rate": (0.02, "uncalibrated choice, exercises imputation"),
}


@dataclass
class GeneratorConfig:
    n_firms: int = GENERATOR_DEFAULTS["n_firms"][0]
    year_start: int = GENERATOR_DEFAULTS["year_start"][0]
    year_end: int = GENERATOR_DEFAULTS["year_end"][0]
    distress_rate: float = GENERATOR_DEFAULTS["distress_rate"][0]
    st_persistence: float = GENERATOR_DEFAULTS["st_persistence"][0]
    adopt_midpoint_healthy: float = GENERATOR_DEFAULTS["adopt_midpoint_healthy"][0]
    adopt_midpoint_distressed: float = GENERATOR_DEFAULTS["adopt_midpoint_distressed"][0]
    adopt_slope: float = GENERATOR_DEFAULTS["adopt_slope"][0]
    adopt_ceiling: float = GENERATOR_DEFAULTS["adopt_ceiling"][0]
    signal_strength: float = GENERATOR_DEFAULTS["signal_strength"][0]
    missing_rate: float = GENERATOR_DEFAULTS["missing_rate"][0]
    # per-ratio (mean, quality loading, idiosyncratic sd, distress coefficient)
    financial_params: dict = field(default_factory=lambda: {
        "x01": (0.10, 0.10, 0.12, -0.2),
        "x02": (0.05, 0.06, 0.05, -0.4),
        "x03": (0.04, 0.05, 0.05, -0.4),
        "x04": (0.55, 0.08, 0.10, -0.3),
        "x05": (0.60, 0.10, 0.20, -0.15),
    })
    seed: int = 0

    def validate(self) -> None:
        if not (0.0 < self.distress_rate < 1.0):
            raise ValueError(f"distress_rate must be in (0, 1), got {self.distress_rate}")
        if not (0.0 < self.st_persistence < 1.0):
            raise ValueError("st_persistence must be in (0, 1)")
        if not (0.0 < self.adopt_ceiling <= 1.0):
            raise ValueError("adopt_ceiling must be in (0, 1]")
        if self.year_end - self.year_start + 1 < 4:
            raise ValueError("year range must span at least 4 years")
        if self.n_firms < 1:
            raise ValueError("n_firms must be positive")


@dataclass
class GroundTruth:
    log_odds: pd.DataFrame = field(repr=False, default=None)  # firm_id, year, eta, p_onset
    coefficients: dict = field(default_factory=dict)


def _ramp(years, midpoint, slope, ceiling):
    return ceiling / (1.0 + np.exp(-slope * (np.asarray(years, dtype=float) - midpoint)))


def generate_panel(config: GeneratorConfig) -> tuple[pd.DataFrame, GroundTruth]:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_firms
    years = np.arange(config.year_start, config.year_end + 1)
    T = len(years)

    quality = rng.normal(size=n)
    adopt_u = rng.uniform(size=n)
    midpoint = np.where(
        quality >= 0.0,
        config.adopt_midpoint_healthy,
        config.adopt_midpoint_distressed,
    )
    # adoption is absorbing: one uniform per firm against a monotone ramp
    adopted = adopt_u[:, None] < _ramp(years, midpoint[:, None], config.adopt_slope,
                                       config.adopt_ceiling)

    # financial ratios load on quality; moments known analytically for scaling
    ratios = {}
    stdzed = {}
    betas = {}
    for c, (mu, load, sd, beta) in config.financial_params.items():
        x = mu + load * quality[:, None] + sd * rng.normal(size=(n, T))
        ratios[c] = x
        stdzed[c] = (x - mu) / np.hypot(load, sd)
        betas[c] = beta

    # AI disclosure intensity: zero unless adopted, and healthy (high-quality)
    # adopters disclose much more, so the protective effect is graded
    intensity = np.exp(0.8 * quality)[:, None]
    counts = np.where(adopted, 1 + rng.poisson(5.0 * intensity, size=(n, T)), 0)
    mdna_counts = rng.binomial(counts, 0.6)
    doc_len = rng.lognormal(mean=np.log(20000.0), sigma=0.3, size=(n, T))
    pat_inv = np.where(adopted, rng.poisson(0.8 * intensity, size=(n, T)), 0)
    pat_uti = np.where(adopted, rng.poisson(0.5 * intensity, size=(n, T)), 0)
    pat_des = np.where(adopted, rng.poisson(0.2 * intensity, size=(n, T)), 0)
    pat_tot = pat_inv + pat_uti + pat_des
    chen_factor = rng.uniform(0.9, 1.3, size=(n, T))

    # graded protective score in [0, 1]: 0 for non-adopters, near 1 for heavy
    # disclosers; the causal channel the with-AI models can recover
    ai_score = np.minimum(np.log1p(counts) / np.log1p(12.0), 1.0)

    # latent distress log-odds uses base-year (t-2) features. The AI term is
    # a falling-behind penalty: risk grows with the gap between the economy's
    # adoption level in that year and the firm's own disclosure score, so in
    # late years non-adopters carry extra risk invisible to the ratios.
    era = _ramp(years, midpoint[:, None], config.adopt_slope, config.adopt_ceiling).mean(axis=0)
    lin = np.zeros((n, T))
    for c in FINANCIAL_COLUMNS:
        lin += betas[c] * stdzed[c]
    lin += config.signal_strength * (era[None, :] - ai_score)

    eta_by_label_year = np.full((n, T), -np.inf)
    eta_by_label_year[:, 2:] = lin[:, :-2]  # label at t, features at t-2

    intercept = _calibrate_intercept(
        eta_by_label_year, config.st_persistence, config.distress_rate
    )
    onset_p = np.zeros((n, T))
    onset_p[:, 2:] = 1.0 / (1.0 + np.exp(-(intercept + eta_by_label_year[:, 2:])))

    st = np.zeros((n, T), dtype=bool)
    for t in range(T):
        stay = np.zeros(n, dtype=bool)
        if t > 0:
            stay = st[:, t - 1] & (rng.uniform(size=n) < config.st_persistence)
        onset = ~stay & (rng.uniform(size=n) < onset_p[:, t])
        if t > 0:
            onset &= ~st[:, t - 1]
        st[:, t] = stay | onset

    firm_ids = np.repeat([f"F{i:05d}" for i in range(n)], T)
    panel = pd.DataFrame({
        "firm_id": firm_ids,
        "year": np.tile(years, n),
        "st_flag": st.reshape(-1),
        "industry_class": "non_financial",
        "ai_unjoined": False,
    })
    for c in FINANCIAL_COLUMNS:
        panel[c] = ratios[c].reshape(-1)
    ai_values = {
        "AI patents total": np.log1p(pat_tot),
        "AI invention": np.log1p(pat_inv),
        "AI utility": np.log1p(pat_uti),
        "AI design": np.log1p(pat_des),
        "AI level": np.log1p(counts),
        "AI level MD&A": np.log1p(mdna_counts),
        "AI density full": counts / doc_len,
        "AI density ChEn": counts / doc_len * chen_factor,
    }
    for c in AI_FEATURE_COLUMNS:
        panel[c] = ai_values[c].reshape(-1)

    if config.missing_rate > 0.0:
        holes = rng.uniform(size=(n * T, len(FINANCIAL_COLUMNS))) < config.missing_rate
        for j, c in enumerate(FINANCIAL_COLUMNS):
            panel.loc[holes[:, j], c] = np.nan

    truth_rows = panel[["firm_id", "year"]].copy()
    truth_rows["eta"] = (intercept + eta_by_label_year).reshape(-1)
    truth_rows["p_onset"] = onset_p.reshape(-1)
    truth = GroundTruth(
        log_odds=truth_rows,
        coefficients={
            "intercept": float(intercept),
            "financial": {c: betas[c] for c in FINANCIAL_COLUMNS},
            "ai_score": -config.signal_strength,
        },
    )
    return panel, truth


def _calibrate_intercept(eta, persistence, target, lo=-15.0, hi=5.0, iters=60):
    """Bisection on the intercept so the expected flagged-year share hits the
    target, accounting for geometric flag persistence and panel censoring."""

    def expected_share(b):
        p = np.zeros_like(eta)
        finite = np.isfinite(eta)
        p[finite] = 1.0 / (1.0 + np.exp(-(b + eta[finite])))
        prob = np.zeros(eta.shape[0])
        total = 0.0
        for t in range(eta.shape[1]):
            prob = prob * persistence + (1.0 - prob) * p[:, t]
            total += prob.sum()
        return total / eta.size

    if expected_share(hi) < target:
        raise ValueError(f"distress_rate target {target} is infeasible")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if expected_share(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def summarize_panel(panel: pd.DataFrame) -> PanelSummary:
    if len(panel) == 0:
        raise ValueError("cannot summarize an empty panel")
    n = len(panel)
    n_dist = int(panel["st_flag"].sum())
    ever = panel.groupby("firm_id")["st_flag"].transform("any")
    cls = np.where(ever, "distressed", "healthy")
    work = panel.assign(health_class=cls)
    prevalence = (
        work.groupby(["year", "health_class"])[list(AI_FEATURE_COLUMNS)]
        .agg(lambda s: float((s > 0).mean()))
        .reset_index()
    )
    class_means = (
        work.groupby("health_class")[list(AI_FEATURE_COLUMNS)].mean().reset_index()
    )
    return PanelSummary(
        n_observations=n,
        n_distressed=n_dist,
        distress_rate=n_dist / n,
        prevalence=prevalence,
        class_means=class_means,
    )


def write_generator_files(panel: pd.DataFrame, out_dir) -> dict:
    """Emit the financial and AI-feature input files consumed by panel assembly."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fin_cols = ["firm_id", "year"] + FINANCIAL_COLUMNS + ["st_flag", "industry_class"]
    fin = panel[["firm_id", "year"] + FINANCIAL_COLUMNS + ["industry_class"]].copy()
    fin["st_flag"] = panel["st_flag"].astype(int)
    fin = fin[fin_cols]
    fin_path = out_dir / "financial.csv"
    fin.to_csv(fin_path, index=False, float_format="%.10g")
    ai = panel[["firm_id", "year"] + list(AI_FEATURE_COLUMNS)]
    ai_path = out_dir / "ai_features.csv"
    ai.to_csv(ai_path, index=False, float_format="%.10g")
    return {"financial": fin_path, "ai_features": ai_path}


def write_synthetic_corpus(panel: pd.DataFrame, out_dir, max_docs=50) -> dict:
    """Optional tiny-text mode: emit documents and a patent file that exercise
    the lexicon extraction end to end (not calibrated to the feature rows)."""
    from pathlib import Path

    out_dir = Path(out_dir)
    docs_dir = out_dir / "corpus"
    docs_dir.mkdir(parents=True, exist_ok=True)
    pat_rows = []
    subset = panel.head(max_docs)
    for firm_id, year, ai_level in zip(
        subset["firm_id"], subset["year"], subset["AI level"]
    ):
        n_terms = int(round(np.expm1(ai_level)))
        body = "公司稳步推进主营业务发展。 " + "本公司积极布局人工智能技术。 " * n_terms
        text = f"{MDNA_MARKER}\n{body}\n{NARRATIVE_MARKER}\n公司坚持稳健经营。\n"
        (docs_dir / f"{firm_id}_{year}.txt").write_text(text, encoding="utf-8")
        if n_terms > 0:
            pat_rows.append({
                "firm_id": firm_id,
                "year": year,
                "kind": "invention",
                "title": "一种人工智能方法",
                "abstract": "基于机器学习的系统",
            })
    pat_path = out_dir / "patents.csv"
    pd.DataFrame(
        pat_rows, columns=["firm_id", "year", "kind", "title", "abstract"]
    ).to_csv(pat_path, index=False)
    return {"corpus": docs_dir, "patents": pat_path}
