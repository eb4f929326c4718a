import pytest

from drsfi.campaign import (
    CampaignSpec,
    DEFAULT_BERS,
    aggregate_table,
    emit_results,
    parse_config,
    read_results,
    run_campaign,
    run_seed_for,
)
from drsfi.errors import ConfigError
from drsfi.metrics import aggregate_runs


def _tiny_spec(**overrides) -> CampaignSpec:
    spec = CampaignSpec(
        experiment="dummy_rmse",
        mlp_depth=[1],
        mlp_hidden=[8],
        embed_dim=[8],
        dense_dim=8,
        sparse_dim=32,
        sparsity=[0.05],
        n_samples=16,
        ber=[0.0, 1e-3],
        targets=["entire_model"],
        mitigation=["none"],
        runs=2,
        seed=7,
    )
    for k, v in overrides.items():
        setattr(spec, k, v)
    return spec


class TestSpecAndConfig:
    def test_defaults_follow_the_design_grid(self):
        spec = CampaignSpec()
        assert spec.mlp_depth == [1, 2]
        assert spec.mlp_hidden == [64, 128, 256, 512]
        assert spec.embed_dim == [64, 128, 256, 512]
        assert spec.dense_dim == 128 and spec.sparse_dim == 8192
        assert spec.sparsity == [0.001, 0.01]
        assert spec.runs == 10
        assert spec.ber == DEFAULT_BERS
        assert spec.ber[0] == 1e-9 and spec.ber[-1] == 1e-2

    def test_minimal_config_fills_defaults(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("experiment = dummy_rmse\n")
        spec = parse_config(path)
        assert spec.experiment == "dummy_rmse"
        assert spec.runs == 10 and spec.ber == DEFAULT_BERS

    def test_comments_scalars_and_lists(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(
            "# comment\n"
            "experiment = ctr_auc\n"
            "mlp_hidden = [16, 32]  # inline comment\n"
            "ber = [1e-6, 1e-4]\n"
            "sparsity = 0.01\n"
            "use_fm = true\n"
            "runs = 3\n"
        )
        spec = parse_config(path)
        assert spec.mlp_hidden == [16, 32]
        assert spec.ber == [1e-6, 1e-4]
        assert spec.sparsity == [0.01]
        assert spec.use_fm is True and spec.runs == 3

    def test_out_of_range_ber_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("experiment = dummy_rmse\nber = [1.5]\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_duplicate_key_rejected_with_line(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("experiment = dummy_rmse\nruns = 3\nruns = 4\n")
        with pytest.raises(ConfigError, match=":3"):
            parse_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("experiment = dummy_rmse\nbherr = 1\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(path)

    def test_type_mismatch_names_line(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("experiment = dummy_rmse\nruns = soon\n")
        with pytest.raises(ConfigError, match=":2"):
            parse_config(path)

    def test_run_seed_derivation_is_stable(self):
        assert run_seed_for(1, 2, 3) == run_seed_for(1, 2, 3)
        assert run_seed_for(1, 2, 3) != run_seed_for(1, 2, 4)
        assert run_seed_for(1, 2, 3) != run_seed_for(1, 3, 3)


class TestRunCampaign:
    def test_ber_zero_records_match_baseline(self):
        spec = _tiny_spec(ber=[0.0], runs=1)
        records = run_campaign(spec)
        assert len(records) == 1
        assert records[0].value == 0.0 and records[0].classification == "numeric"

    def test_record_count_is_the_full_product(self):
        spec = _tiny_spec(
            mlp_hidden=[8, 16], ber=[0.0, 1e-3], targets=["mlp", "embedding"], runs=2
        )
        records = run_campaign(spec)
        assert len(records) == 2 * 2 * 2 * 2

    def test_rerun_is_byte_identical(self, tmp_path):
        spec = _tiny_spec()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_results(run_campaign(spec), "csv", a)
        emit_results(run_campaign(_tiny_spec()), "csv", b)
        assert a.read_bytes() == b.read_bytes()

    def test_parallel_equals_serial(self, tmp_path):
        spec = _tiny_spec(mlp_hidden=[8, 16], runs=1)
        serial = run_campaign(spec)
        spec_par = _tiny_spec(mlp_hidden=[8, 16], runs=1, workers=2)
        parallel = run_campaign(spec_par)
        a, b = tmp_path / "s.csv", tmp_path / "p.csv"
        emit_results(serial, "csv", a)
        emit_results(parallel, "csv", b)
        assert a.read_bytes() == b.read_bytes()

    def test_ctr_experiment_produces_auc_records(self):
        spec = _tiny_spec(
            experiment="ctr_auc",
            train_samples=1500,
            epochs=3,
            batch_size=128,
            learning_rate=0.2,
            ber=[0.0],
            runs=1,
        )
        records = run_campaign(spec)
        assert records[0].metric == "auc"
        assert 0.0 <= records[0].value <= 1.0

    def test_mitigation_values_echoed_in_records(self):
        spec = _tiny_spec(mitigation=["none", "clip", "sbp"], ber=[1e-3], runs=1)
        records = run_campaign(spec)
        mits = {r.mitigation for r in records}
        assert mits == {"none", "clip", "sbp"}
        clip_recs = [r for r in records if r.mitigation == "clip"]
        assert clip_recs[0].clip_mode == "clamp" and clip_recs[0].clip_T == "6.0"
        none_recs = [r for r in records if r.mitigation == "none"]
        assert none_recs[0].clip_mode == "" and none_recs[0].clip_T == ""

    def test_mean_rmse_nondecreasing_in_ber_per_point(self):
        spec = _tiny_spec(
            mlp_hidden=[32, 64],
            embed_dim=[32, 64],
            sparse_dim=256,
            dense_dim=32,
            n_samples=64,
            ber=[1e-7, 1e-6],
            runs=5,
            seed=17,
        )
        records = run_campaign(spec)
        for h in spec.mlp_hidden:
            for e in spec.embed_dim:
                means = []
                for ber in spec.ber:
                    vals = [
                        r.value
                        for r in records
                        if r.mlp_hidden == h and r.embed_dim == e and r.ber == ber
                        and r.classification == "numeric"
                    ]
                    invalid = [
                        r
                        for r in records
                        if r.mlp_hidden == h and r.embed_dim == e and r.ber == ber
                        and r.classification != "numeric"
                    ]
                    agg = aggregate_runs(vals if vals else [float("nan")])
                    means.append((agg.mean or 0.0, len(invalid)))
                # mean rmse (or the invalid count) must not decrease with ber
                assert means[1][0] >= means[0][0] or means[1][1] >= means[0][1]

    def test_config_key_set_matches_spec_fields(self):
        from dataclasses import fields

        from drsfi.campaign import _LIST_FIELDS, _SCALAR_FIELDS

        keys = set(_LIST_FIELDS) | set(_SCALAR_FIELDS)
        assert keys == {f.name for f in fields(CampaignSpec)}

    def test_abft_mitigation_runs_and_values_match_none(self):
        # persistent corruption: checked ops detect but return the same values
        spec = _tiny_spec(mitigation=["none", "abft"], ber=[1e-3], runs=2)
        records = run_campaign(spec)
        by_kind = {}
        for r in records:
            by_kind.setdefault(r.mitigation, []).append(r)
        for none_rec, abft_rec in zip(by_kind["none"], by_kind["abft"]):
            assert none_rec.run_seed == abft_rec.run_seed
            assert none_rec.value == pytest.approx(abft_rec.value, nan_ok=True)


class TestEmission:
    def test_header_only_for_empty_records(self, tmp_path):
        path = tmp_path / "r.csv"
        emit_results([], "csv", path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("experiment,mlp_depth,mlp_hidden")

    def test_nan_value_emitted_literally(self, tmp_path):
        spec = _tiny_spec(ber=[1.0], runs=1)  # full corruption: rmse may be nan
        records = run_campaign(spec)
        path = tmp_path / "r.csv"
        emit_results(records, "csv", path)
        text = path.read_text()
        loaded = read_results(path)
        assert len(loaded) == len(records)

    def test_csv_round_trip_preserves_records(self, tmp_path):
        records = run_campaign(_tiny_spec())
        path = tmp_path / "r.csv"
        emit_results(records, "csv", path)
        loaded = read_results(path)
        path2 = tmp_path / "r2.csv"
        emit_results(loaded, "csv", path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_jsonl_round_trip(self, tmp_path):
        records = run_campaign(_tiny_spec())
        path = tmp_path / "r.jsonl"
        emit_results(records, "jsonl", path)
        loaded = read_results(path)
        path2 = tmp_path / "r2.jsonl"
        emit_results(loaded, "jsonl", path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_timing_column_is_optional(self, tmp_path):
        records = run_campaign(_tiny_spec(ber=[0.0], runs=1))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_results(records, "csv", a)
        emit_results(records, "csv", b, include_timing=True)
        assert "wall_time" not in a.read_text()
        assert "wall_time" in b.read_text()

    def test_figure_table_display_rule(self, tmp_path):
        records = run_campaign(_tiny_spec(ber=[0.0], runs=2))
        table = aggregate_table(records, figure_rule=True)
        # rmse 0.0 at ber 0 -> display cell "0.0"
        last_col = table.splitlines()[1].split(",")[-1]
        assert last_col == "0.0"
