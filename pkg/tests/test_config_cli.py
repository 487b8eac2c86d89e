"""Configuration, preset, serialization and command-line tests."""

import copy
import json

import jsonschema
import numpy as np
import pytest

from povmcast import (
    ConfigError,
    DensityOperator,
    DimensionMismatch,
    OutcomeFunction,
    Povm,
    config_from_dict,
    evaluate_rate_expression,
    load_config,
    operator_from_json,
    operator_to_json,
    params_with_axis,
    prepare_scenario,
    resolve_size,
    scenario_rate_environment,
    vector_from_json,
    vector_to_json,
)
from povmcast.cli import (
    RATE_CSV_COLUMNS,
    SWEEP_CSV_COLUMNS,
    TRIAL_CSV_COLUMNS,
    load_schema,
    main,
)
from povmcast.presets import preset_description, preset_document, preset_names

PRESETS = ("bell-computational", "three-outcome-split", "independent-product", "pure-state")


def op_json(rows):
    m = np.asarray(rows, dtype=complex)
    return {"dim": m.shape[0], "re": m.real.tolist(), "im": m.imag.tolist()}


def minimal_doc(**overrides):
    doc = {
        "rho": op_json([[0.5, 0], [0, 0.5]]),
        "povm": [op_json([[1, 0], [0, 0]]), op_json([[0, 0], [0, 1]])],
        "gA": [0, 1],
        "gB": [0, 1],
        "protocol": {"n": 2, "sA": 2, "sB": 2, "MA": 1, "MB": 1, "case": 2},
    }
    doc.update(overrides)
    return doc


def test_operator_json_round_trip():
    rng = np.random.default_rng(83)
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.array_equal(operator_from_json(operator_to_json(m)), m)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    assert np.array_equal(vector_from_json(vector_to_json(v)), v)
    with pytest.raises(DimensionMismatch):
        operator_from_json({"dim": 2, "re": [[1.0]], "im": [[0.0]]})
    with pytest.raises(DimensionMismatch):
        operator_from_json({"re": [[1.0]], "im": [[0.0]]})
    with pytest.raises(DimensionMismatch):
        vector_from_json({"dim": 3, "re": [1.0], "im": [0.0]})


def bell_env():
    rho = DensityOperator.maximally_mixed(2)
    povm = Povm(elements=(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])), labels=(0, 1))
    g = OutcomeFunction.identity(2)
    return scenario_rate_environment(prepare_scenario(rho, povm, g, g))


def test_rate_environment_frozen_bell_values():
    env = bell_env()
    assert np.isclose(env["iXA_R"], 1.0, atol=1e-12)
    assert np.isclose(env["hXA"], 1.0, atol=1e-12)
    assert np.isclose(env["hXB"], 1.0, atol=1e-12)
    assert abs(env["hXB_given_XA"]) <= 1e-12
    assert np.isclose(env["iXA_XB"], 1.0, atol=1e-12)
    assert np.isclose(env["hR"], 1.0, atol=1e-12)
    assert abs(env["hR_given_XA"]) <= 1e-12
    assert np.isclose(env["hXAXB"], 1.0, atol=1e-12)


def test_rate_expression_evaluation():
    env = bell_env()
    scalars = {"n": 2, "delta": 0.5, "delta2": 0.25, "eps": 0.1}
    assert np.isclose(evaluate_rate_expression("I(X_A;R)", env, scalars), 1.0)
    assert np.isclose(
        evaluate_rate_expression("I(X_B;R|X_A) + 3*delta2", env, scalars),
        env["iXB_R_given_XA"] + 0.75,
    )
    assert np.isclose(
        evaluate_rate_expression("H(X_A,X_B) - H(X_B|X_A) + delta", env, scalars),
        env["hXAXB"] - env["hXB_given_XA"] + 0.5,
    )
    assert np.isclose(evaluate_rate_expression("(1 + eps) / n", env, scalars), 0.55)


def test_rate_expression_rejects_unknown_and_unsafe_tokens():
    env = bell_env()
    scalars = {"n": 2, "delta": 0.5, "delta2": 0.25, "eps": 0.1}
    with pytest.raises(ConfigError, match="unsupported tokens"):
        evaluate_rate_expression("H(Q)", env, scalars)
    with pytest.raises(ConfigError, match="unsupported tokens"):
        evaluate_rate_expression("__import__('os').getcwd()", env, scalars)
    with pytest.raises(ConfigError, match="failed"):
        evaluate_rate_expression("1 + * 2", env, scalars)


def test_resolve_size():
    env = bell_env()
    scalars = {"n": 2, "delta": 0.5, "delta2": 0.25, "eps": 0.1}
    assert resolve_size(7, 2, env, scalars, "f") == 7
    # ceil(2^(2 * (1 + 0.25))) = ceil(2^2.5) = 6
    assert resolve_size("I(X_A;R) + delta2", 2, env, scalars, "f") == 6
    # negative rates floor at one codeword
    assert resolve_size("0 - H(X_A)", 2, env, scalars, "f") == 1
    with pytest.raises(ConfigError):
        resolve_size(0, 2, env, scalars, "f")
    with pytest.raises(ConfigError):
        resolve_size(True, 2, env, scalars, "f")
    with pytest.raises(ConfigError):
        resolve_size(2.5, 2, env, scalars, "f")


def test_config_defaults_and_seed_override():
    cfg = config_from_dict(minimal_doc())
    assert cfg.params.delta == 0.5
    assert cfg.params.delta2 == 0.25
    assert cfg.params.eps == 0.1
    assert cfg.params.m_a == 1
    assert cfg.params.seed == 0
    assert cfg.trials == 1
    assert cfg.mode == "with_alice_randomness"
    assert cfg.equivalence.tolerance == 1e-7
    assert cfg.sweep is None
    reseeded = cfg.with_seed(99)
    assert reseeded.params.seed == 99
    assert cfg.params.seed == 0


def test_config_output_section():
    doc = minimal_doc()
    doc["output"] = {"path": "report.json", "format": "json"}
    cfg = config_from_dict(doc)
    assert cfg.output_path == "report.json"
    assert cfg.output_format == "json"
    assert cfg.with_seed(3).output_path == "report.json"

    assert config_from_dict(minimal_doc()).output_path is None

    doc["output"] = {"path": "x.csv", "format": "yaml"}
    with pytest.raises(ConfigError, match="json or csv"):
        config_from_dict(doc)
    doc["output"] = {"path": ""}
    with pytest.raises(ConfigError, match="nonempty string"):
        config_from_dict(doc)
    doc["output"] = {"where": "x"}
    with pytest.raises(ConfigError, match="unknown key 'where'"):
        config_from_dict(doc)


def test_config_case1_prime_defaults_to_sb():
    doc = minimal_doc()
    doc["protocol"]["case"] = 1
    doc["protocol"]["sB"] = 3
    cfg = config_from_dict(doc)
    assert cfg.params.s_b_prime == 3
    doc["protocol"]["sBprime"] = 9
    assert config_from_dict(doc).params.s_b_prime == 9


def test_config_errors_cite_location():
    with pytest.raises(ConfigError, match="unknown key 'extra'"):
        config_from_dict(minimal_doc(extra=1))
    doc = minimal_doc()
    doc["povm"][1] = {"dim": 2, "re": [[0.0]], "im": [[0.0]]}
    with pytest.raises(ConfigError, match=r"povm\[1\]"):
        config_from_dict(doc)
    with pytest.raises(ConfigError, match="gA"):
        config_from_dict(minimal_doc(gA=[0, 1, 1]))
    with pytest.raises(ConfigError, match="missing 1"):
        config_from_dict(minimal_doc(gA=[0, 2]))
    with pytest.raises(ConfigError, match="gB must be a list of integers"):
        config_from_dict(minimal_doc(gB=[0, "x"]))
    doc = minimal_doc()
    doc["protocol"]["weird"] = 1
    with pytest.raises(ConfigError, match=r"protocol has unknown key 'weird'"):
        config_from_dict(doc)
    doc = minimal_doc()
    doc["protocol"]["n"] = 0
    with pytest.raises(ConfigError, match="protocol.n"):
        config_from_dict(doc)
    with pytest.raises(ConfigError, match="mode"):
        config_from_dict(minimal_doc(mode="telepathy"))
    with pytest.raises(ConfigError, match="requires protocol.case=1"):
        config_from_dict(minimal_doc(mode="without_alice_randomness"))
    with pytest.raises(ConfigError, match="trials"):
        config_from_dict(minimal_doc(trials=0))
    with pytest.raises(ConfigError, match="equivalence has unknown key"):
        config_from_dict(minimal_doc(equivalence={"tol": 1}))
    with pytest.raises(ConfigError, match="perturb_element"):
        config_from_dict(
            minimal_doc(equivalence={"perturb_element": 5, "perturb_scale": 0.1})
        )
    with pytest.raises(ConfigError, match="sweep.axis"):
        config_from_dict(minimal_doc(sweep={"axis": "gamma", "values": [1]}))
    with pytest.raises(ConfigError, match=r"sweep.values\[1\]"):
        config_from_dict(minimal_doc(sweep={"axis": "sB", "values": [1, 0]}))
    with pytest.raises(ConfigError, match="rho"):
        config_from_dict(minimal_doc(rho=op_json([[1, 0], [0, 1]])))
    doc = minimal_doc()
    doc["povm"] = [op_json([[1, 0, 0], [0, 1, 0], [0, 0, 1]])]
    with pytest.raises(ConfigError, match="does not match rho dimension"):
        config_from_dict(doc)


def test_params_with_axis():
    cfg = config_from_dict(minimal_doc())
    p = params_with_axis(cfg.params, "MB", 4)
    assert p.m_b == 4
    p = params_with_axis(cfg.params, "n", 3)
    assert p.n == 3
    p = params_with_axis(cfg.params, "delta", 0.9)
    assert p.delta == 0.9
    base = config_from_dict(minimal_doc()).params
    from dataclasses import replace

    case1 = replace(base, case=1, s_b_prime=4)
    p = params_with_axis(case1, "sB", 8)
    assert p.s_b == 8
    assert p.s_b_prime == 8  # prime pool grows with the selection target
    with pytest.raises(ConfigError):
        params_with_axis(base, "gamma", 1)


def test_load_config_sources(tmp_path):
    cfg = load_config("preset:pure-state")
    assert cfg.name == "pure-state"
    with pytest.raises(ConfigError, match="bell-computational"):
        load_config("preset:nonexistent")  # message lists available names
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(bad))
    good = tmp_path / "good.json"
    good.write_text(json.dumps(minimal_doc()))
    cfg = load_config(str(good))
    assert cfg.params.n == 2


def test_presets_validate_and_are_isolated():
    assert set(preset_names()) == set(PRESETS)
    schema = load_schema("scenario_config")
    for name in PRESETS:
        assert isinstance(preset_description(name), str)
        doc = preset_document(name)
        jsonschema.validate(instance=doc, schema=schema)
        cfg = config_from_dict(doc, name=name)
        assert cfg.name == name
        # mutating a returned document must not leak into the preset
        doc["protocol"]["n"] = 99
        assert preset_document(name)["protocol"]["n"] != 99
    with pytest.raises(ConfigError):
        preset_document("unknown")


def test_cli_rates(capsys, tmp_path):
    out = tmp_path / "rates.json"
    code = main(["rates", "--config", "preset:bell-computational", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "I(X_A;R)         1.000000" in text
    doc = json.loads(out.read_text())
    jsonschema.validate(instance=doc, schema=load_schema("rates_report"))
    assert doc["schema"] == "povmcast/rates-v1"

    csv_out = tmp_path / "rates.csv"
    code = main([
        "rates", "--config", "preset:bell-computational",
        "--out", str(csv_out), "--format", "csv",
    ])
    assert code == 0
    lines = csv_out.read_text().splitlines()
    assert lines[0] == ",".join(RATE_CSV_COLUMNS)
    assert len(lines) == 2


def test_cli_equivalence_all_presets(capsys):
    schema = load_schema("equivalence_report")
    for name in PRESETS:
        code = main(["equivalence", "--config", f"preset:{name}"])
        doc = json.loads(capsys.readouterr().out)
        jsonschema.validate(instance=doc, schema=schema)
        assert code == 0
        assert doc["equivalent"] is True
        assert doc["max_deviation"] <= 1e-7
        assert doc["perturbed"] is False


def test_cli_equivalence_detects_perturbation(capsys, tmp_path):
    doc = minimal_doc(equivalence={"perturb_element": 0, "perturb_scale": 1e-4})
    path = tmp_path / "perturbed.json"
    path.write_text(json.dumps(doc))
    code = main(["equivalence", "--config", str(path)])
    out = json.loads(capsys.readouterr().out)
    assert code == 1
    assert out["equivalent"] is False
    assert out["perturbed"] is True
    assert out["max_deviation"] > 1e-7


def test_cli_simulate_json_and_csv(capsys, tmp_path):
    out = tmp_path / "trials.csv"
    code = main([
        "simulate", "--config", "preset:pure-state", "--out", str(out),
    ])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    jsonschema.validate(instance=doc, schema=load_schema("simulate_report"))
    assert doc["aggregate"]["d_median"] == 0.0
    assert doc["aggregate"]["trials"] == 5
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(TRIAL_CSV_COLUMNS)
    assert len(lines) == 6

    json_out = tmp_path / "trials.json"
    code = main([
        "simulate", "--config", "preset:pure-state",
        "--out", str(json_out), "--format", "json",
    ])
    capsys.readouterr()
    assert code == 0
    assert json.loads(json_out.read_text())["schema"] == "povmcast/simulate-v1"


def test_cli_output_from_config_and_flag_precedence(capsys, tmp_path):
    doc = minimal_doc(trials=2)
    cfg_out = tmp_path / "from_config.json"
    doc["output"] = {"path": str(cfg_out), "format": "json"}
    cfg_path = tmp_path / "scenario.json"
    cfg_path.write_text(json.dumps(doc))

    code = main(["simulate", "--config", str(cfg_path)])
    capsys.readouterr()
    assert code == 0
    assert json.loads(cfg_out.read_text())["schema"] == "povmcast/simulate-v1"

    flag_out = tmp_path / "from_flag.csv"
    code = main([
        "simulate", "--config", str(cfg_path),
        "--out", str(flag_out), "--format", "csv",
    ])
    capsys.readouterr()
    assert code == 0
    lines = flag_out.read_text().splitlines()
    assert lines[0] == ",".join(TRIAL_CSV_COLUMNS)
    assert len(lines) == 3


def test_cli_simulate_seed_override_and_determinism(capsys, tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    argv = ["simulate", "--config", "preset:independent-product"]
    code = main(argv + ["--out", str(a)])
    out_a = capsys.readouterr().out
    assert code == 0
    code = main(argv + ["--out", str(b), "--workers", "4"])
    out_b = capsys.readouterr().out
    assert code == 0
    assert a.read_bytes() == b.read_bytes()
    assert out_a == out_b

    code = main(argv + ["--seed", "123"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0
    assert doc["params"]["seed"] == 123
    assert json.loads(out_a)["params"]["seed"] == 13


def test_cli_sweep_csv_and_trend(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code = main([
        "sweep", "--config", "preset:bell-computational", "--out", str(out),
    ])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    jsonschema.validate(instance=doc, schema=load_schema("sweep_report"))
    assert doc["axis"] == "sB"
    assert doc["values"] == [1, 2, 4, 8]
    assert doc["trend"] is not None
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(SWEEP_CSV_COLUMNS)
    assert len(lines) == 5
    sibling = tmp_path / "sweep.trials.csv"
    trial_lines = sibling.read_text().splitlines()
    assert trial_lines[0] == ",".join(TRIAL_CSV_COLUMNS)
    assert len(trial_lines) == 1 + 4 * 10


def test_cli_sweep_without_section_fails(capsys):
    code = main(["sweep", "--config", "preset:pure-state"])
    captured = capsys.readouterr()
    assert code == 2
    assert "sweep" in captured.err


def test_cli_sweep_partial_failure_hits_cap(capsys, tmp_path):
    doc = minimal_doc(
        trials=2, sweep={"axis": "n", "values": [1, 13]}
    )
    path = tmp_path / "cap.json"
    path.write_text(json.dumps(doc))
    code = main(["sweep", "--config", str(path)])
    captured = capsys.readouterr()
    assert code == 3
    out = json.loads(captured.out)
    assert out["failed_value"] == 13
    assert "exceeds cap" in out["error"]
    assert out["values"] == [1]  # the finished point is still reported
    assert "exceeds cap" in captured.err


def test_cli_validation_exit_codes(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(minimal_doc(extra=1)))
    assert main(["rates", "--config", str(bad)]) == 2
    capsys.readouterr()
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2
    capsys.readouterr()
    big = tmp_path / "big.json"
    doc = minimal_doc()
    doc["protocol"]["n"] = 13
    big.write_text(json.dumps(doc))
    assert main(["simulate", "--config", str(big)]) == 3
    err = capsys.readouterr().err
    assert "exceeds cap" in err


def test_module_entrypoint_runs():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "povmcast", "rates", "--config", "preset:pure-state"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "scenario: pure-state" in proc.stdout
