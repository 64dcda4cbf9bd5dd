import json

import numpy as np
import pytest
from hypothesis import given

from risksharing import rules as R
from risksharing.cli import main
from risksharing.errors import ConfigError, PoolFileError
from risksharing.fileio import (
    RunConfig,
    build_properties,
    build_rule,
    contributions_to_csv,
    dumps_json,
    parse_pool_csv,
    pool_to_csv,
    read_contributions_csv,
)

from .conftest import real_pools

POOL_A = "prob,X1,X2\n0.5,0,2\n0.25,4,2\n0.25,8,2\n"


@pytest.fixture
def pool_file(tmp_path):
    path = tmp_path / "pool.csv"
    path.write_text(POOL_A)
    return path


class TestPoolCsv:
    def test_parse(self):
        pool = parse_pool_csv(POOL_A)
        assert pool.losses.tolist() == [[0, 4, 8], [2, 2, 2]]
        assert pool.space.weights.tolist() == [0.5, 0.25, 0.25]

    @pytest.mark.parametrize(
        "text, line, column",
        [
            ("prob,X1\n0.5,1\n0.6,1\n", 3, 1),
            ("prob,X1\n0,1\n1,1\n", 2, 1),
            ("prob,X1\n0.5,-1\n0.5,1\n", 2, 2),
            ("prob,X1,X2\n0.5,1\n0.5,1,1\n", 2, None),
            ("prob,X1\n0.5,1\n0.5,abc\n", 3, 2),
            ("p,X1\n1,1\n", 1, 1),
        ],
    )
    def test_rejections_carry_position(self, text, line, column):
        with pytest.raises(PoolFileError) as info:
            parse_pool_csv(text)
        assert info.value.line == line and info.value.column == column

    def test_probabilities_renormalized_within_tolerance(self):
        pool = parse_pool_csv("prob,X1\n0.3333333333,1\n0.6666666667,2\n")
        assert abs(pool.space.weights.sum() - 1) <= 1e-12

    @given(real_pools())
    def test_round_trip(self, pool):
        again = parse_pool_csv(pool_to_csv(pool))
        np.testing.assert_array_equal(again.losses, pool.losses)

    @given(real_pools())
    def test_contribution_csv_sums_to_s(self, pool):
        cm = R.apply(R.mean_proportional(degenerate="uniform"), pool)
        c, s = read_contributions_csv(contributions_to_csv(cm, pool))
        assert np.all(np.abs(c.sum(axis=0) - s) <= 1e-9)


class TestRunConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            RunConfig.from_dict({"bogus": 1})

    def test_unknown_battery_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"battery": {"size": 3}})

    def test_scenario_index_checked_against_pool(self):
        cfg = RunConfig.from_dict({"rule": "scen_prop", "omegas": [3]})
        with pytest.raises(ConfigError):
            cfg.validate_against(parse_pool_csv(POOL_A))
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"q": "scenario:5"}).validate_against(parse_pool_csv(POOL_A))

    def test_bad_format(self):
        with pytest.raises(ConfigError):
            RunConfig(format="xml")

    def test_rule_names(self):
        cfg = RunConfig.from_dict({"q": "scenario:1", "omegas": [1, 2, 0]})
        assert build_rule("q_prop", cfg).name == "q_proportional[scenario:1]"
        assert build_rule("scen_lin", cfg).name == "scenario_linear[1,2,0]"
        with pytest.raises(ConfigError):
            build_rule("median", cfg)

    def test_all_properties_expand_with_metrics(self):
        assert len(build_properties(RunConfig())) == 5
        assert len(build_properties(RunConfig(q="mean", q1="mean", q2="cov"))) == 9


class TestJson:
    def test_twelve_significant_digits(self):
        assert json.loads(dumps_json({"x": 1 / 3}))["x"] == 0.333333333333

    def test_sorted_keys(self):
        assert dumps_json({"b": 1, "a": 2}).index('"a"') < dumps_json({"b": 1, "a": 2}).index('"b"')


class TestCli:
    def test_compute_uniform(self, pool_file, capsys):
        assert main(["compute", "--pool", str(pool_file), "--rule", "uniform"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines == ["C1,C2,S", "1.0,1.0,2.0", "3.0,3.0,6.0", "5.0,5.0,10.0"]

    def test_compute_mean_proportional(self, pool_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["compute", "--pool", str(pool_file), "--rule", "mean_prop", "--out", str(out)]) == 0
        c, s = read_contributions_csv((out / "contributions.csv").read_text())
        np.testing.assert_allclose(c.T, [[1.2, 0.8], [3.6, 2.4], [6.0, 4.0]])
        assert "E[C1] = 3" in capsys.readouterr().out

    def test_compute_degenerate_exit_2(self, tmp_path, capsys):
        path = tmp_path / "const.csv"
        path.write_text("prob,X1,X2\n0.5,1,3\n0.5,3,1\n")
        assert main(["compute", "--pool", str(path), "--rule", "cov_lin"]) == 2
        assert "var(S)=0" in capsys.readouterr().err

    def test_malformed_csv_exit_1(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("prob,X1\n0.5,1\n0.5,x\n")
        assert main(["compute", "--pool", str(path), "--rule", "uniform"]) == 1
        assert "line 3, column 2" in capsys.readouterr().err

    def test_usage_error_exit_1(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["compute", "--degenerate", "maybe"])
        assert info.value.code == 1

    def test_check_uniform_all_hold(self, tmp_path):
        assert main(["check", "--rule", "uniform", "--out", str(tmp_path), "--format", "json"]) == 0
        data = json.loads((tmp_path / "check.json").read_text())
        assert {r["verdict"] for r in data["reports"]} == {"holds_on_battery"}

    def test_check_all_in_one_witness(self, tmp_path):
        main(["check", "--rule", "all_in_one", "--property", "reshuffling", "--out", str(tmp_path), "--format", "json"])
        (report,) = json.loads((tmp_path / "check.json").read_text())["reports"]
        assert report["verdict"] == "violated"
        assert report["witness"]["perm"] is not None and report["witness"]["participant"] is not None

    def test_check_mean_prop_not_strongly_aggregate(self, tmp_path):
        main(["check", "--rule", "mean_prop", "--property", "strongly_aggregate", "--out", str(tmp_path), "--format", "json"])
        assert json.loads((tmp_path / "check.json").read_text())["reports"][0]["verdict"] == "violated"

    def test_check_with_pool(self, pool_file, tmp_path):
        assert main(["check", "--pool", str(pool_file), "--rule", "uniform", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "check.md").exists()

    def test_check_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"rule": "mean_prop", "properties": ["reshuffling"], "format": "json",
                                   "battery": {"n_values": [2], "random_per_n": 2}}))
        assert main(["check", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "check.json").read_text())["battery"]["n_values"] == [2]

    def test_bad_config_exit_1(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"rule": "uniform", "colour": 1}')
        assert main(["check", "--config", str(cfg)]) == 1

    def test_classify_subset(self, tmp_path):
        assert main(["classify", "--rule", "uniform", "--out", str(tmp_path), "--format", "json"]) == 0
        data = json.loads((tmp_path / "classify.json").read_text())
        assert [r["rule"] for r in data["rules"]] == ["uniform"] and data["matches"]

    def test_classify_scenario_rows(self, tmp_path):
        main(["classify", "--rule", "scen_prop", "--rule", "scen_lin", "--out", str(tmp_path), "--format", "json"])
        data = json.loads((tmp_path / "classify.json").read_text())
        assert [r["pattern"] for r in data["rules"]] == ["✓−✓−", "✓−✓−"]

    def test_theorems_t1(self, tmp_path):
        assert main(["theorems", "--theorem", "T1", "--out", str(tmp_path), "--format", "md"]) == 0
        assert "uniform" in (tmp_path / "theorems.md").read_text()

    def test_theorems_mismatch_exit_3(self, tmp_path):
        assert main(["theorems", "--theorem", "T6", "--q2", "first_var", "--out", str(tmp_path)]) == 3

    def test_byte_identical_reruns(self, tmp_path):
        for cmd in (["check", "--rule", "cond_mean"], ["classify"]):
            a, b = tmp_path / "a", tmp_path / "b"
            main(cmd + ["--out", str(a), "--format", "json"])
            main(cmd + ["--out", str(b), "--format", "json"])
            name = f"{cmd[0]}.json"
            assert (a / name).read_bytes() == (b / name).read_bytes()
