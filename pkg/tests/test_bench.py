import json

import pandas as pd
import pytest

from aidistress.bench import (
    BenchConfig,
    BenchError,
    read_versioned_csv,
    run_benchmark,
    seed_for,
    write_versioned_csv,
)
from aidistress.synth import GeneratorConfig, generate_panel


@pytest.fixture(scope="module")
def small_panel():
    panel, _ = generate_panel(GeneratorConfig(n_firms=200, seed=0, missing_rate=0.0))
    return panel


def smoke_config(**kw):
    defaults = dict(earliest_start=2022, families=["logit"], seed=0)
    defaults.update(kw)
    return BenchConfig.from_dict(defaults)


class TestSeedDerivation:
    def test_stable_and_distinct(self):
        a = seed_for(0, 1, "logit", "with_ai")
        assert a == seed_for(0, 1, "logit", "with_ai")
        assert a != seed_for(0, 1, "logit", "without_ai")
        assert a != seed_for(1, 1, "logit", "with_ai")


class TestVersionedCsv:
    def test_round_trip(self, tmp_path):
        df = pd.DataFrame({"a": [1, 2], "b": [0.5, 1.5]})
        write_versioned_csv(df, tmp_path / "t.csv", "test")
        back = read_versioned_csv(tmp_path / "t.csv")
        pd.testing.assert_frame_equal(df, back)

    def test_missing_header_rejected(self, tmp_path):
        (tmp_path / "t.csv").write_text("a,b\n1,2\n")
        with pytest.raises(BenchError, match="schema header"):
            read_versioned_csv(tmp_path / "t.csv")


class TestSmokeRun:
    def test_single_window_logit(self, small_panel, tmp_path):
        result = run_benchmark(small_panel, smoke_config(), tmp_path)
        assert result.failures == []
        assert len(result.results) == 2  # 1 window x 1 family x 2 feature sets

        res = read_versioned_csv(tmp_path / "results.csv")
        assert len(res) == 2
        for col in ["window_index", "start_year", "end_year", "family",
                    "feature_set", "recall", "specificity", "gmean", "auc",
                    "type1_fpr", "type2_fnr", "chosen_config"]:
            assert col in res.columns
        assert set(res["feature_set"]) == {"with_ai", "without_ai"}
        assert (res["start_year"] == 2022).all()
        assert (res["end_year"] == 2022).all()

        summary = read_versioned_csv(tmp_path / "summary.csv")
        assert len(summary) == 2
        assert (summary["n_splits"] == 1).all()

        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["completed_splits"] == [0]
        assert manifest["config"]["families"] == ["logit"]
        assert (tmp_path / "models" / "logit_with_ai.json").exists()

    def test_comparisons_need_two_windows(self, small_panel, tmp_path):
        run_benchmark(small_panel, smoke_config(earliest_start=2021), tmp_path)
        comp = read_versioned_csv(tmp_path / "comparisons.csv")
        assert set(comp["family"]) == {"logit"}
        assert {"recall", "gmean", "type2_fnr"} <= set(comp["metric"])
        assert comp["p_boot"].between(0, 1).all()

    def test_explanations_and_stability_files(self, small_panel, tmp_path):
        config = smoke_config(
            earliest_start=2021, families=["logit", "gbt"],
            explanations=True, explain_families=["gbt"], explain_rows=20,
        )
        run_benchmark(small_panel, config, tmp_path)
        stab = read_versioned_csv(tmp_path / "stability.csv")
        assert set(stab["family"]) == {"gbt"}
        assert {"feature", "top6_frequency", "mean_rank",
                "mean_normalized_importance"} <= set(stab.columns)
        expl = read_versioned_csv(tmp_path / "explanations.csv")
        assert (expl["split"] == 0).all()
        assert set(expl["model"]) == {"gbt"}


class TestFailureIsolation:
    def test_bad_family_config_does_not_corrupt_others(self, small_panel, tmp_path):
        config = smoke_config(
            families=["logit", "gbt"],
            grids={"logit": [{"l2": 1.0}],
                   "gbt": [{"n_rounds": 5, "no_such_option": 1}]},
        )
        result = run_benchmark(small_panel, config, tmp_path)
        assert len(result.failures) == 2  # gbt fails in both feature sets
        assert all("gbt" in f for f in result.failures)
        res = read_versioned_csv(tmp_path / "results.csv")
        assert set(res["family"]) == {"logit"}
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert len(manifest["failures"]) == 2

    def test_all_tasks_failing_raises(self, small_panel, tmp_path):
        config = smoke_config(families=["gbt"],
                              grids={"gbt": [{"no_such_option": 1}]})
        with pytest.raises(BenchError, match="every window task failed"):
            run_benchmark(small_panel, config, tmp_path)


class TestWorkerPoolDeterminism:
    def test_jobs_do_not_change_outputs(self, small_panel, tmp_path):
        config = smoke_config(earliest_start=2021, families=["logit", "gbt"])
        run_benchmark(small_panel, config, tmp_path / "serial", jobs=1)
        run_benchmark(small_panel, config, tmp_path / "pooled", jobs=4)
        for name in ["results.csv", "summary.csv", "comparisons.csv",
                     "models/logit_with_ai.json", "models/gbt_without_ai.json"]:
            a = (tmp_path / "serial" / name).read_bytes()
            b = (tmp_path / "pooled" / name).read_bytes()
            assert a == b, name


class TestConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(BenchError, match="unknown benchmark config"):
            BenchConfig.from_dict({"max_windows": 3})

    def test_window_end_defaults_to_year_before_test(self):
        assert BenchConfig(test_year=2021).window_end == 2020
