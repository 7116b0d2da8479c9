"""File formats and the command-line driver (exit codes, determinism)."""

from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import RUNNING_PROFILE, make_running_instance
from usvcg import SchemaError, files
from usvcg.cli import main
from usvcg.solver import BiasSpec, ConstantTarget, EquitableTarget, TaxPreference

RUNNING = "fixtures/running_example.json"
BALLOTS = "fixtures/running_example_ballots.json"


# =============================================================================
# Formats
# =============================================================================


def test_instance_roundtrip():
    inst = make_running_instance()
    doc = files.instance_to_dict(inst)
    back, ballots = files.parse_instance(doc)
    assert ballots is None
    assert back == inst


def test_fixture_loads():
    inst, ballots = files.load_instance(RUNNING)
    assert inst.m == 2 and inst.n == 3
    assert inst.types == RUNNING_PROFILE
    assert ballots is None
    inst2, ballots2 = files.load_instance(BALLOTS)
    assert inst2.types is None
    assert len(ballots2) == 3
    assert ballots2[0].decision.tax == 69.4


def test_schema_errors():
    good = files.instance_to_dict(make_running_instance())
    for key in ("m", "n", "semantics", "mrs_convention", "gain_curves", "money_curve"):
        broken = {k: v for k, v in good.items() if k != key}
        with pytest.raises(SchemaError):
            files.parse_instance(broken)
    with pytest.raises(SchemaError):
        files.parse_instance({**good, "ballots": [{"allocation": [0.5, 0.5], "tax": 1.0}]})
    with pytest.raises(SchemaError):
        files.parse_instance({**good, "gain_curves": [{"kind": "cubic", "scale": 1.0}]})
    with pytest.raises(SchemaError):
        files.parse_instance({**good, "money_curve": {"kind": "power", "q": 2.0}})


def test_bias_roundtrip():
    for bias in (
        BiasSpec(lam=1.5, target=ConstantTarget((0.3, 0.7))),
        BiasSpec(lam=0.5, target=EquitableTarget(), psi=TaxPreference.exp_decay(2.0, 50.0)),
    ):
        doc = files.bias_to_dict(bias)
        assert files.parse_bias(doc) == bias


def test_sigma_from_triplet_and_from_instance():
    doc = {
        "b0": 1.5,
        "mu": 2.0,
        "mean_type": {"alloc_weights": [0.4, 0.6], "money_weight": 1.0},
        "gain_curves": [{"kind": "log", "scale": 10.0}, {"kind": "log", "scale": 10.0}],
        "money_curve": {"kind": "power", "q": 0.5},
    }
    sigma, template = files.parse_sigma(doc)
    assert sigma.b0 == 1.5 and sigma.mu == 2.0
    assert template.semantics == "per_capita"

    inst_doc = files.instance_to_dict(make_running_instance(semantics="per_capita"))
    sigma2, template2 = files.parse_sigma(inst_doc, mu_default=3.0)
    assert sigma2.mu == 3.0
    assert sigma2.mean_type.alloc_weights == pytest.approx((0.4, 0.6))


def test_answers_parsing():
    doc = {"answers": [{"agent": 0, "good": 1, "tau": 2.5}]}
    assert files.parse_answers(doc) == {(0, 1): 2.5}
    with pytest.raises(SchemaError):
        files.parse_answers({"answers": [{"agent": 0}]})


# =============================================================================
# CLI flows
# =============================================================================


def test_cli_solve_mean(tmp_path, capsys):
    out = tmp_path / "solve.json"
    assert main(["solve", RUNNING, "--mean", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["decision"]["tax"] == pytest.approx(374.61, abs=0.05)
    assert doc["validation"]["passed"] is True


def test_cli_solve_explicit_type(tmp_path):
    out = tmp_path / "solve.json"
    assert main(["solve", RUNNING, "--type", "0.4,0.6,1.03", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["decision"]["tax"] == pytest.approx(377.0, abs=1.0)


def test_cli_elicit_recovers_types(tmp_path):
    out = tmp_path / "types.json"
    assert main(["elicit", BALLOTS, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    recovered = doc["types"]
    for rec, truth in zip(recovered, RUNNING_PROFILE):
        assert np.allclose(rec["alloc_weights"], truth.alloc_weights, atol=1e-2)
        assert rec["money_weight"] == pytest.approx(truth.money_weight, abs=1e-2)


def test_cli_elicit_followup_flow(tmp_path):
    inst_doc = {
        "m": 2,
        "n": 2,
        "external_budget": 0.0,
        "semantics": "nominal",
        "mrs_convention": "n_scaled",
        "gain_curves": [{"kind": "log", "scale": 10.0}, {"kind": "log1p", "scale": 0.4}],
        "money_curve": {"kind": "power", "q": 0.5},
        "ballots": [
            {"allocation": [1.0, 0.0], "tax": 396.0},
            {"allocation": [0.9, 0.1], "tax": 300.0},
        ],
    }
    inst_path = tmp_path / "inst.json"
    inst_path.write_text(json.dumps(inst_doc))
    questions = tmp_path / "q.json"
    out = tmp_path / "types.json"

    rc = main(["elicit", str(inst_path), "--questions", str(questions), "--out", str(out)])
    assert rc == 4
    qdoc = json.loads(questions.read_text())
    assert [q["agent"] for q in qdoc["pending_followups"]] == [0]
    assert qdoc["pending_followups"][0]["good"] == 1

    answers = tmp_path / "a.json"
    answers.write_text(json.dumps({"answers": [{"agent": 0, "good": 1, "tau": 1.25}]}))
    rc = main(["elicit", str(inst_path), "--answers", str(answers), "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert len(doc["types"]) == 2


def test_cli_mechanism_and_check(tmp_path):
    out = tmp_path / "result.json"
    assert main(["mechanism", RUNNING, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert max(abs(r) for r in doc["identity_residuals"]) <= 1e-8
    assert len(doc["payments"]) == 3
    assert main(["check", RUNNING, str(out)]) == 0

    # tampering must be caught
    doc["payments"][0] += 0.5
    out.write_text(json.dumps(doc))
    assert main(["check", RUNNING, str(out)]) == 5


def test_cli_mechanism_bias_and_check(tmp_path):
    bias_path = tmp_path / "bias.json"
    bias_path.write_text(json.dumps({"lambda": 1.0, "target": {"kind": "equitable"}}))
    out = tmp_path / "result.json"
    assert main(["mechanism", RUNNING, "--bias", str(bias_path), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert 0.4 < doc["decision"]["allocation"][0] < 0.5
    assert main(["check", RUNNING, str(out)]) == 0


def test_cli_mechanism_bias_zero_matches_plain(tmp_path):
    bias_path = tmp_path / "bias.json"
    bias_path.write_text(
        json.dumps({"lambda": 0.0, "target": {"kind": "constant", "allocation": [0.5, 0.5]}})
    )
    plain = tmp_path / "plain.json"
    biased = tmp_path / "biased.json"
    assert main(["mechanism", RUNNING, "--out", str(plain)]) == 0
    assert main(["mechanism", RUNNING, "--bias", str(bias_path), "--out", str(biased)]) == 0
    a = json.loads(plain.read_text())
    b = json.loads(biased.read_text())
    assert a["decision"] == b["decision"]
    assert a["payments"] == b["payments"]


def test_cli_mechanism_hetero(tmp_path):
    doc = files.instance_to_dict(make_running_instance())
    doc["tax_weights"] = [1.5, 1.0, 0.5]
    doc["money_curve"] = {"kind": "kt", "q": 0.6, "r": 0.7, "loss_weight": 1.5}
    inst_path = tmp_path / "inst.json"
    inst_path.write_text(json.dumps(doc))
    out = tmp_path / "result.json"
    assert main(["mechanism", str(inst_path), "--hetero", "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert max(abs(r) for r in res["identity_residuals"]) <= 1e-8
    assert main(["check", str(inst_path), str(out)]) == 0


def test_cli_fuzz_pass_and_fail(tmp_path):
    out = tmp_path / "fuzz.json"
    csv_path = tmp_path / "fuzz.csv"
    rc = main(
        ["fuzz", RUNNING, "--trials", "40", "--seed", "3",
         "--misreport-space", "allocation", "--csv", str(csv_path), "--out", str(out)]
    )
    assert rc == 0
    assert json.loads(out.read_text())["passed"] is True
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "trial,gain"
    assert len(lines) == 41

    rc = main(["fuzz", RUNNING, "--trials", "40", "--seed", "3", "--out", str(out)])
    assert rc == 5  # full-space misreports expose the money-weight channel


def test_cli_fuzz_deterministic_output(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert main(
            ["fuzz", RUNNING, "--trials", "25", "--seed", "11",
             "--misreport-space", "allocation", "--out", str(path)]
        ) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_coalition_probe(tmp_path):
    out = tmp_path / "coalition.json"
    rc = main(
        ["fuzz", RUNNING, "--trials", "12", "--seed", "7", "--coalition", "2",
         "--out", str(out)]
    )
    doc = json.loads(out.read_text())
    assert doc["experiment"] == "coalition_probe"
    assert rc in (0, 5)


def test_cli_converge(tmp_path):
    sigma = {
        "b0": 0.0,
        "mu": 2.0,
        "mean_type": {"alloc_weights": [0.4, 0.6], "money_weight": 31.0 / 30.0},
        "gain_curves": [{"kind": "log", "scale": 10.0}, {"kind": "log", "scale": 10.0}],
        "money_curve": {"kind": "power", "q": 0.5},
    }
    sigma_path = tmp_path / "sigma.json"
    sigma_path.write_text(json.dumps(sigma))
    out = tmp_path / "converge.json"
    csv_path = tmp_path / "converge.csv"
    rc = main(
        ["converge", str(sigma_path), "--n-list", "10,40", "--seed", "5",
         "--csv", str(csv_path), "--out", str(out)]
    )
    assert rc == 0
    doc = json.loads(out.read_text())
    assert [r["n"] for r in doc["rows"]] == [10, 40]
    assert csv_path.read_text().startswith("n,max_abs_payment")


def test_cli_exit_codes(tmp_path):
    assert main(["solve", "missing.json", "--mean"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", str(bad), "--mean"]) == 2

    # diverging-tax instance: engine error -> 3
    divergent = {
        "m": 1,
        "n": 1000000000,
        "external_budget": 0.0,
        "semantics": "nominal",
        "mrs_convention": "n_scaled",
        "gain_curves": [{"kind": "power", "scale": 1.0, "exponent": 0.3}],
        "money_curve": {"kind": "power", "q": 0.5},
    }
    div_path = tmp_path / "div.json"
    div_path.write_text(json.dumps(divergent))
    assert main(["solve", str(div_path), "--type", "1,1"]) == 3
