import numpy as np
import pytest

from longdina.cli import main
from longdina.errors import ConfigurationError
from longdina.study import (
    StudyConfig,
    aggregate_records,
    config_from_entries,
    load_records,
    load_study_config,
    run_replication,
    run_study,
)

TINY = dict(
    conditions=((30, 6),),
    replications=2,
    chains=2,
    burn_in=30,
    kept=40,
    opt_n_starts=2,
    seed=11,
)


@pytest.fixture(scope="module")
def tiny_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    config = StudyConfig(**TINY)
    report = run_study(config, out)
    return config, report, out


class TestRunReplication:
    def test_same_seed_identical_records(self):
        config = StudyConfig(**TINY)
        a = run_replication((30, 6), 0.4, 0, config)
        b = run_replication((30, 6), 0.4, 0, config)
        for ra, rb in zip(a, b):
            ra.pop("_runtime_s")
            rb.pop("_runtime_s")
            assert ra == rb

    def test_joint_only_leaves_stepwise_fields_absent(self):
        config = StudyConfig(estimators=("joint",), **TINY)
        records = run_replication((30, 6), 0.4, 0, config)
        assert len(records) == 1
        assert records[0]["estimator"] == "joint"
        assert "optimizer_status" not in records[0]

    def test_both_estimators_share_dataset_hash(self):
        config = StudyConfig(**TINY)
        records = run_replication((30, 6), 0.4, 0, config)
        assert records[0]["dataset_hash"] == records[1]["dataset_hash"]

    def test_estimator_failure_becomes_failed_record(self, monkeypatch):
        import longdina.study as study_mod

        def boom(*args, **kwargs):
            raise RuntimeError("chain exploded")

        monkeypatch.setattr(study_mod, "fit_joint", boom)
        config = StudyConfig(**TINY)
        records = run_replication((30, 6), 0.4, 0, config)
        joint = next(r for r in records if r["estimator"] == "joint")
        stepwise = next(r for r in records if r["estimator"] == "stepwise")
        assert joint["status"] == "failed:joint"
        assert "chain exploded" in joint["error"]
        assert stepwise["status"] == "ok"


class TestRunStudy:
    def test_bookkeeping(self, tmp_path):
        config = StudyConfig(
            conditions=((30, 6), (40, 6)),
            replications=3,
            chains=2,
            burn_in=20,
            kept=30,
            opt_n_starts=2,
            seed=4,
        )
        report = run_study(config, tmp_path / "out")
        assert len(report.records) == 2 * 3 * 2  # conditions x reps x estimators
        aar = report.tables["table_aar"]
        assert len(aar) == 2 * 2 * 2  # conditions x waves x estimators

    def test_worker_invariance_byte_identical(self, tmp_path):
        config = StudyConfig(**TINY)
        run_study(config, tmp_path / "w1")
        run_study(StudyConfig(**{**TINY, "workers": 2}), tmp_path / "w2")
        assert (tmp_path / "w1/records.csv").read_bytes() == (
            tmp_path / "w2/records.csv"
        ).read_bytes()

    def test_reaggregation_from_records_is_exact(self, tiny_study):
        config, report, out = tiny_study
        reloaded = load_records(out / "records.csv")
        tables = aggregate_records(reloaded, config)
        assert tables == report.tables

    def test_manifest_round_trip(self, tiny_study):
        config, _, out = tiny_study
        restored = load_study_config(out / "manifest.txt")
        assert restored.conditions == config.conditions
        assert restored.replications == config.replications
        assert restored.seed == config.seed
        assert restored.burn_in == config.burn_in
        np.testing.assert_array_equal(
            restored.true_params.initial, config.true_params.initial
        )

    def test_expected_output_files(self, tiny_study):
        _, _, out = tiny_study
        for name in (
            "records.csv",
            "timings.csv",
            "manifest.txt",
            "report.md",
            "table_aar.csv",
            "table_items.csv",
            "table_beta.csv",
            "table_gamma.csv",
            "convergence.csv",
        ):
            assert (out / name).exists(), name

    def test_rmse_at_least_mae_in_tables(self, tiny_study):
        _, report, _ = tiny_study
        for name in ("table_beta", "table_gamma"):
            rows = report.tables[name]
            by_key = {}
            for row in rows:
                key = (row["rho"], row["n_learners"], row["n_items"], row["estimator"])
                by_key.setdefault(key, {})[row["metric"]] = row
            for pair in by_key.values():
                for col, value in pair["mae"].items():
                    if isinstance(value, float):
                        assert pair["rmse"][col] >= value - 1e-12


class TestStudyConfig:
    def test_full_scale_preset(self):
        full = StudyConfig().at_full_scale()
        assert full.replications == 100
        assert full.burn_in == 1000
        assert full.kept == 2000

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            StudyConfig(replications=0)
        with pytest.raises(ConfigurationError):
            StudyConfig(estimators=("joint", "magic"))

    def test_config_from_entries_rejects_unknown_keys(self):
        with pytest.raises(ConfigurationError):
            config_from_entries({"study.bogus": "1"})

    def test_config_from_entries_parses_conditions(self):
        config = config_from_entries({"study.conditions": "200x6,400x18"})
        assert config.conditions == ((200, 6), (400, 18))
        with pytest.raises(ConfigurationError):
            config_from_entries({"study.conditions": "banana"})


class TestCli:
    def test_simulate_then_fit_joint_prints_summary(self, tmp_path, capsys):
        assert main(["simulate", "--condition", "30x6", "--seed", "3",
                     "--out", str(tmp_path / "ds"), "--quiet"]) == 0
        code = main([
            "fit-joint", "--data", str(tmp_path / "ds"),
            "--chains", "2", "--burn-in", "20", "--kept", "30", "--seed", "1",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "guess[1]" in out
        assert "acquire[2,3]" in out
        assert "max PSRF" in out

    def test_fit_stepwise_with_audit(self, tmp_path, capsys):
        assert main(["simulate", "--condition", "30x6", "--seed", "4",
                     "--out", str(tmp_path / "ds"), "--quiet"]) == 0
        code = main([
            "fit-stepwise", "--data", str(tmp_path / "ds"),
            "--audit-dir", str(tmp_path / "audit"),
        ])
        assert code == 0
        assert (tmp_path / "audit" / "cep_wave1.csv").exists()
        assert "corrected loglik" in capsys.readouterr().out

    def test_study_byte_identical_across_runs(self, tmp_path):
        args = ["study", "--condition", "30x6", "--reps", "2", "--seed", "7", "--quiet"]
        extra = ["--config", _tiny_config(tmp_path)]
        assert main(args + extra + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + extra + ["--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a/records.csv").read_bytes() == (
            tmp_path / "b/records.csv"
        ).read_bytes()

    def test_report_reaggregates_identically(self, tmp_path):
        extra = ["--config", _tiny_config(tmp_path)]
        assert main(["study", "--condition", "30x6", "--reps", "2", "--seed", "9",
                     "--quiet", "--out", str(tmp_path / "s")] + extra) == 0
        assert main(["report", "--records", str(tmp_path / "s"),
                     "--out", str(tmp_path / "r"), "--quiet"]) == 0
        for table in ("table_aar", "table_items", "table_beta", "table_gamma"):
            assert (tmp_path / f"s/{table}.csv").read_bytes() == (
                tmp_path / f"r/{table}.csv"
            ).read_bytes()

    def test_unknown_flag_exits_one(self, capsys):
        assert main(["study", "--definitely-not-a-flag"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_bad_condition_exits_one(self, capsys):
        assert main(["simulate", "--condition", "banana"]) == 1

    def test_missing_dataset_exits_two(self, tmp_path):
        assert main(["fit-joint", "--data", str(tmp_path / "nope")]) == 2

    def test_config_flag_precedence(self, tmp_path):
        # CLI --reps overrides the config file value
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(
            "study.replications=5\nmcmc.burn_in=10\nmcmc.kept=20\n"
            "study.conditions=30x6\nopt.n_starts=2\n"
        )
        assert main(["study", "--config", str(cfg), "--reps", "1", "--seed", "2",
                     "--quiet", "--out", str(tmp_path / "o")]) == 0
        records = load_records(tmp_path / "o/records.csv")
        assert {r["rep"] for r in records} == {"0"}

    def test_output_root_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LONGDINA_OUT", str(tmp_path / "root"))
        assert main(["simulate", "--condition", "30x6", "--seed", "1", "--quiet"]) == 0
        assert (tmp_path / "root" / "dataset-30x6-seed1" / "manifest.txt").exists()

    def test_joint_trace_flag(self, tmp_path):
        assert main(["simulate", "--condition", "30x6", "--seed", "5",
                     "--out", str(tmp_path / "ds"), "--quiet"]) == 0
        trace = tmp_path / "trace.csv"
        assert main(["fit-joint", "--data", str(tmp_path / "ds"),
                     "--burn-in", "20", "--kept", "30", "--trace", str(trace)]) == 0
        assert trace.read_text().splitlines()[0] == "chain,iteration,parameter,value"


def _tiny_config(tmp_path):
    cfg = tmp_path / "tiny.txt"
    if not cfg.exists():
        cfg.write_text("mcmc.burn_in=20\nmcmc.kept=30\nopt.n_starts=2\n")
    return str(cfg)
