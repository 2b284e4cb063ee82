"""Command-line workflows: exit codes, output schemas, reproducibility."""

import json
from pathlib import Path

import pytest

from pricewar.cli import main
from pricewar.game import read_records
from tests.test_pipeline import synthetic_o2o

SIM_CFG = {
    "rounds": 4, "num_customer_groups": 2, "customers_per_group": 10,
    "budget1": 40.0, "budget2": 40.0, "budget_mode": "per_round",
    "demand": {"min": 1, "max": 20},
}

INFER_CFG = {"acc": 4, "opp_arity": 2, "sweeps": 40, "burn_in": 20, "thin": 4,
             "chains": 2}


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def run_simulate(tmp_path, out_name, seed=3):
    cfg = write_json(tmp_path / "sim.json", SIM_CFG)
    out = tmp_path / out_name
    code = main(["simulate", "--config", cfg, "--out", str(out), "--seed", str(seed)])
    assert code == 0
    return out


class TestSimulate:
    def test_outputs_validate(self, tmp_path):
        out = run_simulate(tmp_path, "out")
        records = read_records(out / "records_company1.csv")
        assert len(records) == 4 * 20
        lines = (out / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "round,share1,share2"
        assert len(lines) == 5

    def test_seed_reproducibility(self, tmp_path):
        out1 = run_simulate(tmp_path, "a", seed=9)
        out2 = run_simulate(tmp_path, "b", seed=9)
        for name in ("records_company1.csv", "records_company2.csv", "trajectory.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_missing_config_is_usage_error(self, tmp_path):
        code = main(["simulate", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_bad_market_key_is_config_error(self, tmp_path):
        cfg = write_json(tmp_path / "sim.json", {"round_count": 4})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestInfer:
    def test_end_to_end(self, tmp_path):
        out = run_simulate(tmp_path, "sim")
        cfg = write_json(tmp_path / "lda.json", INFER_CFG)
        inf = tmp_path / "inf"
        code = main(["infer", "--records", str(out / "records_company1.csv"),
                     "--config", cfg, "--out", str(inf), "--seed", "1"])
        assert code == 0
        for name in ("preference.csv", "strategy.csv", "diagnostics.csv"):
            assert (inf / name).exists()
        diag = (inf / "diagnostics.csv").read_text().splitlines()
        assert diag[0] == "chain,sweep,log_joint"
        chains = {line.split(",")[0] for line in diag[1:]}
        assert chains == {"0", "1"}

    def test_reproducible(self, tmp_path):
        out = run_simulate(tmp_path, "sim")
        cfg = write_json(tmp_path / "lda.json", INFER_CFG)
        a, b = tmp_path / "ia", tmp_path / "ib"
        for target in (a, b):
            assert main(["infer", "--records", str(out / "records_company1.csv"),
                         "--config", cfg, "--out", str(target), "--seed", "4"]) == 0
        for name in ("preference.csv", "strategy.csv", "diagnostics.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_empty_records_is_data_error(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("period,customer_id,own_award,count,demand\n")
        assert main(["infer", "--records", str(empty), "--out", str(tmp_path / "o")]) == 3


class TestPreprocess:
    def test_end_to_end_and_reproducible(self, tmp_path):
        data = tmp_path / "o2o.csv"
        synthetic_o2o(data, n_users=60)
        outs = []
        for name in ("p1", "p2"):
            out = tmp_path / name
            code = main(["preprocess", "--data", str(data), "--merchant", "1",
                         "--groups", "2", "--strategy-groups", "3",
                         "--out", str(out), "--seed", "0"])
            assert code == 0
            outs.append(out)
        for name in ("assignments.csv", "records_pg0.csv", "records_pg1.csv",
                     "coupon_levels.csv", "exposure_pg0.csv", "quarantine.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_unknown_merchant_is_data_error(self, tmp_path):
        data = tmp_path / "o2o.csv"
        synthetic_o2o(data, n_users=10)
        assert main(["preprocess", "--data", str(data), "--merchant", "777",
                     "--out", str(tmp_path / "o")]) == 3


class TestTournament:
    def config(self, tmp_path, cells):
        return write_json(tmp_path / "t.json", {
            "seed": 1, "seeds": 2, "cells": cells,
            "market": dict(SIM_CFG),
        })

    def test_small_matrix_runs(self, tmp_path):
        cfg = self.config(tmp_path, [["random", "random"]])
        out = tmp_path / "t"
        assert main(["tournament", "--config", cfg, "--out", str(out)]) == 0
        rows = (out / "tournament.csv").read_text().splitlines()
        assert len(rows) == 2
        share = float(rows[1].split(",")[2])
        assert 0.3 < share < 0.7

    def test_threaded_bit_reproducible(self, tmp_path):
        cfg = self.config(tmp_path, [["random", "random"], ["random", "random"]])
        outs = []
        for name, threads in (("ta", "2"), ("tb", "2"), ("tc", "1")):
            out = tmp_path / name
            assert main(["tournament", "--config", cfg, "--out", str(out),
                         "--threads", threads]) == 0
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir())
        for out in outs[1:]:
            assert sorted(p.name for p in out.iterdir()) == files
            for name in files:
                assert (outs[0] / name).read_bytes() == (out / name).read_bytes()

    def test_invalid_variant_is_config_error(self, tmp_path):
        cfg = self.config(tmp_path, [["random", "psychic"]])
        assert main(["tournament", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_empty_cells_is_config_error(self, tmp_path):
        cfg = self.config(tmp_path, [])
        assert main(["tournament", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestEvaluate:
    def test_nll_and_w1_reports(self, tmp_path):
        sim = run_simulate(tmp_path, "sim")
        cfg = write_json(tmp_path / "lda.json", INFER_CFG)
        inf = tmp_path / "inf"
        assert main(["infer", "--records", str(sim / "records_company1.csv"),
                     "--config", cfg, "--out", str(inf), "--seed", "1"]) == 0
        truth = tmp_path / "truth.csv"
        lines = ["strategy_group,level,count"]
        for entity in range(20):
            lines += [f"{entity},1,5", f"{entity},2,3"]
        truth.write_text("\n".join(lines) + "\n")
        out = tmp_path / "eval"
        code = main(["evaluate", "--pref", str(inf / "preference.csv"),
                     "--theta", str(inf / "strategy.csv"),
                     "--records", str(sim / "records_company1.csv"),
                     "--truth", str(truth), "--out", str(out)])
        assert code == 0
        nll = (out / "nll_report.csv").read_text().splitlines()
        assert nll[0] == "model,nll,floored_fraction"
        assert {row.split(",")[0] for row in nll[1:]} == {"lda", "uniform"}
        w1 = (out / "w1_report.csv").read_text().splitlines()
        assert w1[0] == "entity,w1_lda,w1_uniform,w1_overall_average"
        assert w1[-1].startswith("mean,")

    def test_missing_estimate_file_is_config_error(self, tmp_path):
        code = main(["evaluate", "--pref", str(tmp_path / "nope.csv"),
                     "--theta", str(tmp_path / "nope2.csv"),
                     "--records", str(tmp_path / "r.csv"), "--out", str(tmp_path / "o")])
        assert code in (2, 3, 4)


class TestAcceptanceConfigCommitted:
    def test_acceptance_tournament_config_parses(self):
        path = Path(__file__).resolve().parent.parent / "configs" / "acceptance_tournament.json"
        payload = json.loads(path.read_text())
        assert payload["seed"] == 2026
        assert payload["seeds"] == 10
        assert payload["cells"] == [["dp", "random"], ["dqn+lda", "dqn"],
                                    ["random", "random"]]
        assert payload["market"]["budget1"] == 2000.0
