import csv
import json

import pytest

from relmeas import __version__
from relmeas.cli import ConfigError, OutputDocument, emit, main, parse_config, summary_path, to_json
from relmeas.scenarios import ScenarioConfig, SummaryStats, run


def test_parse_valid_config():
    config, _ = parse_config(
        "--scenario ensemble --model vn --a1 0.6 0 --a2 0.8 0 --events 100000 --seed 42".split()
    )
    assert config.scenario == "ensemble" and config.n_events == 100_000 and config.seed == 42
    assert config.a1 == pytest.approx(0.6) and config.a2 == pytest.approx(0.8)


def test_parse_ch_undoing():
    config, _ = parse_config("--scenario undoing --model ch --n-atoms 4 --a1 0.6 0 --a2 0 0.8".split())
    assert config.model == "ch" and config.n_atoms == 4 and config.a2 == pytest.approx(0.8j)


@pytest.mark.parametrize(
    "argv",
    [
        "--scenario ensemble --a1 1 0 --a2 1 0",
        "--scenario nonsense --a1 1 0 --a2 0 0",
        "--scenario ensemble --model ch --n-atoms 9 --a1 1 0 --a2 0 0",
        "--scenario ensemble --a1 1 0 --a2 0 0 --format csv",
    ],
)
def test_config_errors_exit_2(argv, capsys):
    with pytest.raises(ConfigError):
        parse_config(argv.split())
    assert main(argv.split()) == 2


def test_seed_env_fallback(monkeypatch):
    monkeypatch.setenv("RELMEAS_SEED", "1234")
    config, _ = parse_config("--scenario ensemble --a1 1 0 --a2 0 0".split())
    assert config.seed == 1234
    config, _ = parse_config("--scenario ensemble --a1 1 0 --a2 0 0 --seed 5".split())
    assert config.seed == 5


def test_json_document(tmp_path):
    out = tmp_path / "doc.json"
    code = main(
        f"--scenario sequential --a1 0.6 0 --a2 0.8 0 --events 200 --seed 1 --emit-events --out {out}".split()
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert list(doc) == ["config", "summary", "events", "tool_version"]
    assert doc["config"]["a1"] == [0.6, 0.0]
    assert doc["tool_version"] == __version__
    assert len(doc["events"]) == 200


def test_json_without_events(tmp_path):
    out = tmp_path / "doc.json"
    main(f"--scenario ensemble --a1 0.6 0 --a2 0.8 0 --events 50 --out {out}".split())
    assert "events" not in json.loads(out.read_text())


def test_empty_events_requested():
    config = ScenarioConfig("discrimination", "vn", 0.6, 0.8)
    _, summary = run(config)
    doc = json.loads(to_json(OutputDocument(config, summary, [])))
    assert doc["events"] == []


def test_float_precision():
    config = ScenarioConfig("discrimination", "vn", 0.6, 0.8)
    summary = SummaryStats(expectation_b_pure=0.1)
    text = to_json(OutputDocument(config, summary))
    assert "0.10000000000000001" in text


def test_emission_deterministic(tmp_path):
    config = ScenarioConfig("undoing", "vn", 0.6, 0.8, n_events=300, seed=9)
    events, summary = run(config)
    doc = OutputDocument(config, summary, events)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    emit(doc, "json", a)
    emit(doc, "json", b)
    assert a.read_bytes() == b.read_bytes()


def test_csv_round_trip(tmp_path):
    out = tmp_path / "events.csv"
    code = main(f"--scenario ensemble --a1 0.6 0 --a2 0.8 0 --events 100000 --seed 42 --format csv --out {out}".split())
    assert code == 0
    with out.open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["event", "stream", "observer", "step", "outcome"]
    assert len(rows) == 1 + 200_000
    assert all(len(r) == 5 and all(f.lstrip("-").isdigit() for f in r) for r in rows[1:])
    summary = json.loads(summary_path(out).read_text())
    assert summary["summary"]["details"]["observers"] == ["O"]
    assert "events" not in summary


def test_exit_code_on_failed_gate(tmp_path):
    # sigma so small that no finite sample passes the frequency gate
    argv = f"--scenario ensemble --a1 0.6 0 --a2 0.8 0 --events 1000 --sigma 1e-9 --out {tmp_path / 'x.json'}"
    assert main(argv.split()) == 1


def test_unwritable_destination(tmp_path):
    argv = f"--scenario discrimination --a1 0.6 0 --a2 0.8 0 --out {tmp_path / 'missing' / 'x.json'}"
    assert main(argv.split()) == 2
