import json

import pytest
import yaml

from dfeagg.cli import main
from dfeagg.config import TEMPLATE, ConfigError, RunConfig, load_config, validate_config

FAST = ["--toy-field", "--set", "baselines.paillier_bits=512", "--set", "baselines.timing_params=32"]
SMALL = ["--set", "scenario.n_clients=4", "--set", "scenario.n_classes=2", "--set", "scenario.n_features=3",
         "--set", "scenario.samples_per_client=40", "--set", "scenario.test_samples_per_class=20",
         "--set", "crypto.chunk_dim=4"]


def test_template_parses_to_defaults():
    parsed = yaml.safe_load(TEMPLATE)
    assert validate_config(parsed) == RunConfig()


def test_init_writes_template(tmp_path):
    p = tmp_path / "cfg.yaml"
    assert main(["init", str(p)]) == 0
    assert main(["init", str(p)]) == 2
    assert load_config(p) == RunConfig()


def test_validation_aggregates_all_fields(tmp_path):
    with pytest.raises(ConfigError) as exc:
        validate_config({"quant": {"bits_b": 1}, "training": {"rounds": 0},
                         "scenario": {"n_clients": 3, "colour": "red"}})
    assert set(exc.value.fields) == {"quant.bits_b", "training.rounds", "scenario.n_clients", "scenario.colour"}


def test_invalid_config_exit_2_and_no_run_dir(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "-o", str(out), "--set", "training.rounds=0", "--set", "crypto.decrypt_path=slow"]) == 2
    assert not out.exists()
    err = capsys.readouterr().err
    assert "training.rounds" in err and "crypto.decrypt_path" in err
    assert main(["run", "--bogus-flag"]) == 2


def _fingerprints(capsys):
    lines = capsys.readouterr().out.strip().splitlines()
    return dict(line.split() for line in lines)


def test_keygen_cardinality_and_determinism(tmp_path, capsys):
    assert main(["keygen", "--toy-field", "--seed", "5", "-o", str(tmp_path / "a")]) == 0
    fa = _fingerprints(capsys)
    assert len(list((tmp_path / "a" / "clients").glob("*.key"))) == 12
    assert (tmp_path / "a" / "aggregator.key").exists()
    assert (tmp_path / "a" / "master.key").stat().st_mode & 0o777 == 0o600
    assert main(["keygen", "--toy-field", "--seed", "5", "-o", str(tmp_path / "b")]) == 0
    assert _fingerprints(capsys) == fa
    assert main(["keygen", "--toy-field", "-o", str(tmp_path / "c")]) == 0
    fc = _fingerprints(capsys)
    assert fc["msms-1"] != fa["msms-1"] and fc["aggregator"] != fa["aggregator"]


def test_run_with_keys_and_report_reproduces(tmp_path, capsys):
    keys, run = tmp_path / "keys", tmp_path / "run"
    assert main(["keygen", *FAST, *SMALL, "--seed", "1", "-o", str(keys)]) == 0
    capsys.readouterr()
    assert main(["run", *FAST, *SMALL, "--seed", "1", "--keys", str(keys), "--rounds", "3", "-o", str(run)]) == 0
    first = capsys.readouterr().out
    assert {p.name for p in run.iterdir()} == {"config.yaml", "key_fingerprints.json", "metrics.csv",
                                                "confusion.json", "summary.json"}
    summary = json.loads((run / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["all_rounds_within_tolerance"]
    key_fps = json.loads((keys / "fingerprints.json").read_text())
    assert json.loads((run / "key_fingerprints.json").read_text()) == key_fps
    assert "master" not in (run / "key_fingerprints.json").read_text()
    assert main(["report", str(run)]) == 0
    table = capsys.readouterr().out
    assert table.strip() in first
    assert main(["report", str(run)]) == 0
    assert capsys.readouterr().out == table
    # the snapshot is itself a valid config
    assert load_config(run / "config.yaml").seed == 1


def test_run_refuses_mismatched_keys(tmp_path):
    keys = tmp_path / "keys"
    assert main(["keygen", "--toy-field", "--seed", "1", "--clients", "6", "-o", str(keys)]) == 0
    code = main(["run", *FAST, "--keys", str(keys), "-o", str(tmp_path / "run")])
    assert code == 2 and not (tmp_path / "run").exists()


def test_report_param_count(capsys):
    assert main(["report", "--params", "37196556", "--no-timing"]) == 0
    out = capsys.readouterr().out
    assert "2,083.01 MB" in out and "57,133.91 MB" in out and "57,233.91" in out
    ratio_line = next(l for l in out.splitlines() if l.startswith("byte ratio PPFL / DFE (nominal)"))
    assert ratio_line.split()[-1] == "27.43"
    assert main(["report", "--params", "1", "--no-timing"]) == 0
    out = capsys.readouterr().out
    assert "56 B" in out and "1,536 B" in out


def test_report_timing_rows(capsys):
    assert main(["report", "--params", "100", *FAST]) == 0
    out = capsys.readouterr().out
    rows = {l.split("  ")[0]: l for l in out.splitlines()}
    dfe = next(v for k, v in rows.items() if k.startswith("DFE encrypt"))
    pai = next(v for k, v in rows.items() if k.startswith("Paillier-512"))
    assert float(dfe.split()[-2]) > 0 and float(pai.split()[-2]) > 0


def test_runtime_abort_exit_3(tmp_path, monkeypatch):
    import dfeagg.simulation as sim
    from dfeagg.errors import DlogNotFoundError

    def broken(*a, **k):
        raise DlogNotFoundError("forced")
    monkeypatch.setattr(sim, "aggregator_round", broken)
    run = tmp_path / "run"
    assert main(["run", *FAST, *SMALL, "--seed", "2", "--rounds", "2", "-o", str(run)]) == 3
    summary = json.loads((run / "summary.json").read_text())
    assert summary["status"] == "aborted" and summary["aborted_round"] == 1


def test_keyboard_interrupt_flushes_metrics(tmp_path, monkeypatch):
    import dfeagg.simulation as sim
    real = sim._one_round
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 3:
            raise KeyboardInterrupt
        return real(*a, **k)
    monkeypatch.setattr(sim, "_one_round", flaky)
    run = tmp_path / "run"
    assert main(["run", *FAST, *SMALL, "--seed", "2", "--rounds", "5", "--pipeline", "encrypted",
                 "-o", str(run)]) == 3
    lines = (run / "metrics.csv").read_text().splitlines()
    assert len(lines) == 3  # header + two finished rounds
    assert json.loads((run / "summary.json").read_text())["status"] == "interrupted"
