import csv
import io
import json

import numpy as np
import pytest

from paa.cli import main
from paa.harness import experiments as ex
from paa.harness.scenario import ScenarioError, load_scenario, scenario_from_dict, trap_scenario
from paa.smdp import sup_kl


def minimal_doc(**extra):
    doc = {
        "schema": 1,
        "seed": 7,
        "gamma": 0.5,
        "welfare": {"q": 1, "u_min": 0.1, "u_max": 1.0},
        "model": {
            "kernel": [[[0.5, 0.5], [1.0, 0.0]], [[0.0, 1.0], [0.25, 0.75]]],
            "utilities": [[0.2, 0.9], [0.4, 0.6], [0.3, 1.0]],
        },
    }
    doc.update(extra)
    return doc


def write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def csv_rows(text):
    body = text.split("\n", 1)[1]
    return list(csv.DictReader(io.StringIO(body)))


class TestLoading:
    def test_minimal(self, tmp_path):
        sc = load_scenario(write(tmp_path, minimal_doc()))
        assert sc.model.num_states == 2 and sc.model.num_actions == 2 and sc.model.num_individuals == 3
        assert sc.seed == 7 and sc.pair.realized_d == 0

    def test_bad_row_named(self, tmp_path):
        doc = minimal_doc()
        doc["model"]["kernel"][1][0] = [0.3, 0.5]
        with pytest.raises(ScenarioError, match=r"\$\.model\.kernel.*kernel\[1\]\[0\] sums to 0.8"):
            load_scenario(write(tmp_path, doc))

    def test_generator_deterministic(self, tmp_path):
        doc = minimal_doc(seed=42)
        del doc["model"]
        doc["generator"] = {"kind": "random", "num_states": 4, "num_actions": 2, "num_individuals": 9}
        a = load_scenario(write(tmp_path, doc, "a.json"))
        b = load_scenario(write(tmp_path, doc, "b.json"))
        assert np.array_equal(a.model.kernel, b.model.kernel)
        assert np.array_equal(a.model.utilities, b.model.utilities)

    @pytest.mark.parametrize("mutate,path", [
        (lambda d: d.pop("gamma"), r"\$\.gamma"),
        (lambda d: d.update(gamma=1.0), r"\$\.gamma"),
        (lambda d: d.update(schema=2), r"\$\.schema"),
        (lambda d: d.update(generator={"kind": "random"}), r"exactly one"),
        (lambda d: d["welfare"].update(u_min=2.0), r"\$\.welfare"),
        (lambda d: d["model"]["utilities"][0].__setitem__(0, 1.5), r"\$\.model\.utilities"),
        (lambda d: d.update(model_error={"lambda": 2}), r"\$\.model_error"),
        (lambda d: d.update(planner={"H": 1, "K": 1, "C": 1, "n": 9}), r"\$\.planner\.n"),
        (lambda d: d.update(safeguard={"omega": 99, "delta": 0.1, "H": 1, "K": 1, "C": 1, "n": 1}),
         r"\$\.safeguard\.omega"),
        (lambda d: d.update(start_state=5), r"\$\.start_state"),
        (lambda d: d.update(seed=True), r"\$\.seed"),
    ])
    def test_semantic_errors_carry_path(self, mutate, path):
        doc = minimal_doc()
        mutate(doc)
        with pytest.raises(ScenarioError, match=path):
            scenario_from_dict(doc)

    def test_parse_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ScenarioError, match="invalid JSON"):
            load_scenario(p)

    def test_trap_generator_round_trip(self, tmp_path, capsys):
        assert main(["gen", "trap", "--out", str(tmp_path / "trap.json")]) == 0
        sc = load_scenario(tmp_path / "trap.json")
        doc = json.loads((tmp_path / "trap.json").read_text())
        derived = doc["_derived"]
        assert sc.model.num_states == 4
        assert derived["margin_safe"] > 0 and derived["margin_trap"] > 0
        assert sc.safeguard.omega > derived["w_min"]


class TestCli:
    def test_exit_codes(self, tmp_path, capsys):
        path = write(tmp_path, minimal_doc(planner={"H": 2, "K": 3, "C": 2, "n": 2, "delta": 0.1}))
        assert main(["oracle", "--scenario", path]) == 0
        assert main(["plan", "--scenario", path]) == 0
        assert main(["params", "--scenario", path, "--epsilon", "0.5", "--delta", "0.1"]) == 0
        assert main(["oracle", "--scenario", str(tmp_path / "missing.json")]) == 1
        with pytest.raises(SystemExit) as info:
            main(["oracle"])
        assert info.value.code == 1
        assert main(["safeguard", "--scenario", path, "--policy", "greedy"]) == 1
        assert main(["plan", "--scenario", path, "--node-budget", "3"]) == 2

    def test_infeasible_tolerance(self, tmp_path, capsys):
        path = write(tmp_path, minimal_doc(model_error={"lambda": 0.5}))
        assert main(["params", "--scenario", path, "--epsilon", "0.1", "--delta", "0.1"]) == 2
        assert "smallest achievable epsilon" in capsys.readouterr().err

    def test_byte_identical_bodies(self, tmp_path, capsys):
        path = write(tmp_path, minimal_doc(planner={"H": 2, "K": 3, "C": 2, "n": 2, "delta": 0.1},
                                           model_error={"lambda": 0.1}))
        outs = []
        for i in range(2):
            out = tmp_path / f"r{i}.csv"
            assert main(["evaluate", "--scenario", path, "-M", "3", "--seed", "5", "--out", str(out)]) == 0
            outs.append(out.read_text())
        assert outs[0].startswith("# generated ")
        assert outs[0].split("\n", 1)[1] == outs[1].split("\n", 1)[1]
        out = tmp_path / "r2.csv"
        main(["evaluate", "--scenario", path, "-M", "3", "--seed", "6", "--out", str(out)])
        assert out.read_text().split("\n", 1)[1] != outs[0].split("\n", 1)[1]

    def test_realized_d_row(self, tmp_path, capsys):
        path = write(tmp_path, minimal_doc(model_error={"lambda": 0.2}))
        main(["oracle", "--scenario", path])
        rows = csv_rows(capsys.readouterr().out)
        d_rows = [r for r in rows if r["metric"] == "realized_d"]
        sc = load_scenario(path)
        assert len(d_rows) == 1
        assert float(d_rows[0]["value"]) == sup_kl(sc.model.kernel, sc.pair.approx_kernel)

    def test_json_output(self, tmp_path, capsys):
        path = write(tmp_path, minimal_doc())
        assert main(["oracle", "--scenario", path, "--format", "json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert {r["metric"] for r in doc["rows"]} == {"realized_d", "v_star", "q_star"}

    def test_verify_bounds_cli(self, tmp_path, capsys):
        out = tmp_path / "v.json"
        assert main(["verify-bounds", "lemma5", "--format", "json", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["summary"]["failed"] == 0 and doc["summary"]["cases"] == 12


class TestCommands:
    def test_params_report(self, tmp_path):
        sc = scenario_from_dict(minimal_doc(planner={"epsilon": 0.4, "delta": 0.1}))
        rep = ex.cmd_params(sc)
        values = {m: v for _, _, m, v in rep.rows}
        assert values["feasible"] is True and values["k"] == 3
        assert values["realized_d"] == 0

    def test_evaluate_exhaustive_toy_has_zero_gap(self):
        doc = minimal_doc(planner={"H": 12, "K": 1, "C": 1, "n": 3, "epsilon": 0.1})
        doc["model"]["kernel"] = [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
        rep = ex.cmd_evaluate(scenario_from_dict(doc), seed=0, repetitions=4)
        gaps = [v for _, _, m, v in rep.rows if m.startswith("gap[")]
        assert len(gaps) == 8 and max(gaps) == 0

    def test_evaluate_single_repetition(self):
        sc = scenario_from_dict(minimal_doc(planner={"H": 1, "K": 2, "C": 1, "n": 2}))
        rep = ex.cmd_evaluate(sc, seed=0, repetitions=1)
        assert sum(m.startswith("gap[") for _, _, m, _ in rep.rows) == 2

    def test_safeguard_low_omega_admits_everything(self):
        # omega at W_min and a deterministic model with exact estimates: the floor is u_max + gamma W_min + alpha
        doc = minimal_doc()
        doc["model"]["kernel"] = [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
        doc["model"]["utilities"] = [[0.97, 0.99], [0.98, 0.99], [0.99, 1.0]]
        doc["safeguard"] = {"omega": 0.2, "delta": 0.1, "H": 30, "K": 10**12, "C": 10**12, "n": 3}
        rep = ex.cmd_safeguard(scenario_from_dict(doc), seed=0, policy="random", episodes=5, length=10)
        assert rep.summary["shielded"]["halts"] == 0
        assert rep.summary["shielded"] == rep.summary["unshielded"]

    def test_safeguard_trap_blocks_adversary(self):
        sc = scenario_from_dict(trap_scenario())
        rep = ex.cmd_safeguard(sc, seed=0, policy="adversarial", episodes=5, length=4)
        # the adversary steps into the trap at once; every later action leads to D
        assert rep.summary["unshielded"]["unsafe_actions"] == 20
        assert rep.summary["unshielded"]["destructive_entries"] == 20  # T and D both sit below omega
        assert rep.summary["shielded"]["unsafe_actions"] == 0
        assert rep.summary["shielded"]["destructive_entries"] == 0
