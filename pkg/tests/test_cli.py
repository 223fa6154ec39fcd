import io
import json

import pytest

from pkmsim import cli, protocol
from pkmsim.config import ScenarioConfig, ScenarioError, from_dict, load, schema
from pkmsim.matrix import EXPECTED_MATRIX, run_matrix


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def matrix_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("m")
    return d, run(["matrix", "--check", "--out-dir", str(d)])


def test_check_passes(matrix_run):
    d, (code, out, _) = matrix_run
    assert code == 0
    assert "matrix matches expected" in out


def test_reports_written(matrix_run):
    d, _ = matrix_run
    for name in ("matrix.json", "matrix.csv", "overheads.json", "overheads.csv", "trace.log"):
        assert (d / name).stat().st_size > 0
    rows = (d / "matrix.csv").read_text().splitlines()
    assert rows[0] == "attack,protocol,verdict,metric_name,metric_value"
    assert len(rows) == 7 * 5 + 1
    data = json.loads((d / "matrix.json").read_text())
    assert data["matches_expected"] is True and len(data["cells"]) == 35


def test_weakened_protocol_fails_check(tmp_path, monkeypatch):
    # an SS that skips signature checks can be impersonated
    monkeypatch.setattr(protocol, "_check_signed", lambda msg, fields, signer: None)
    code, _, err = run(["matrix", "--check", "--out-dir", str(tmp_path)])
    assert code == 1
    assert "mismatch: Impersonation/PKMv2" in err


def test_single_protocol_column(tmp_path):
    code, out, _ = run(["matrix", "--check", "--protocol", "ISNAP", "--out-dir", str(tmp_path)])
    assert code == 0
    rows = (tmp_path / "matrix.csv").read_text().splitlines()
    assert len(rows) == 7 + 1 and all(",ISNAP," in r for r in rows[1:])


def test_single_column_consistent_with_full_grid():
    m = run_matrix(ScenarioConfig(protocols=("HA",)))
    for a in m.attacks:
        assert m.verdict(a, protocol.ProtocolId.HA) is EXPECTED_MATRIX[a][protocol.ProtocolId.HA][0]


def test_attack_subcommand(tmp_path):
    code, out, _ = run(["attack", "--attack", "IdentityTheft", "--protocol", "PKMv2",
                        "--out-dir", str(tmp_path)])
    assert code == 0
    assert "IdentityTheft PKMv2: Success" in out
    assert "extracted_mac" in out


def test_overhead_subcommand(tmp_path):
    code, out, _ = run(["overhead", "--out-dir", str(tmp_path)])
    assert code == 0
    assert "TSA,1187,6000,384000,3000" in out
    assert (tmp_path / "overheads.csv").exists() and not (tmp_path / "matrix.csv").exists()


def test_trace_subcommand(tmp_path):
    code, out, _ = run(["trace", "--protocol", "PKMv1", "--out-dir", str(tmp_path)])
    assert code == 0
    assert out == (tmp_path / "trace.log").read_text()
    assert "| authorized" in out
    fields = out.splitlines()[0].split(" | ")
    assert len(fields) == 6


def test_unwritable_path_names_it(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(["overhead", "--out-dir", str(blocker / "sub")])
    assert code == 2
    assert str(blocker / "sub") in err


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"seed": 5, "protocols": ["TSA"], "attacks": ["Impersonation"]}))
    c = load(cfg, {"seed": 9})
    assert c.seed == 9 and c.protocols == ("TSA",) and c.attacks == ("Impersonation",)
    code, out, _ = run(["attack", "--config", str(cfg), "--out-dir", str(tmp_path)])
    assert code == 0 and "Impersonation TSA: Success" in out


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ScenarioError, match="bogus"):
        from_dict({"bogus": 1})
    cfg = tmp_path / "s.json"
    cfg.write_text('{"bogus": 1}')
    code, _, err = run(["matrix", "--config", str(cfg), "--out-dir", str(tmp_path)])
    assert code == 2 and "bogus" in err


@pytest.mark.parametrize("bad", [
    {"window": -1}, {"attacks": ["Nope"]}, {"protocols": []}, {"overload": "explode"},
    {"clock_drifts": {"bs": -2}}, {"adversary_delay": 0.5},
])
def test_invalid_scenarios(bad):
    with pytest.raises(ScenarioError):
        from_dict(bad)


def test_matrix_keyword():
    assert len(from_dict({"attacks": "matrix"}).attacks) == 7


def test_bad_json_file(tmp_path):
    f = tmp_path / "x.json"
    f.write_text("{nope")
    with pytest.raises(ScenarioError, match="not valid JSON"):
        load(f)
    with pytest.raises(ScenarioError, match="cannot read"):
        load(tmp_path / "missing.json")


def test_schema_covers_every_field():
    props = set(schema()["properties"])
    assert props == set(ScenarioConfig().to_dict())


def test_docs_schema_matches_package():
    from pathlib import Path
    docs = Path(__file__).resolve().parents[1] / "docs" / "scenario.schema.json"
    assert json.loads(docs.read_text()) == schema()


def test_clock_offsets_reach_nodes():
    from dataclasses import replace
    from pkmsim.attacks import AttackKind, Verdict, run_attack
    # lagging the BS by hand reproduces the suppress-replay success without the skew knob
    sc = replace(ScenarioConfig(), skew=0, clock_offsets={"bs": -30.0})
    assert run_attack(AttackKind.SUPPRESS_REPLAY, protocol.ProtocolId.TSA, sc).verdict is Verdict.SUCCESS
