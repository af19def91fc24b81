import os

import pytest

from dledger.cli import main
from dledger.crypto import make_provider
from dledger.names import EntityId
from dledger.records import PayloadKind, RecordPayload, build_record, encode_record
from dledger.sim.harness import derive_seed

TINY = """\
name: cli_tiny
entities: 4
duration: 40.0
drain: 25.0
lambda_e: 0.4
n: 2
w_confirm: 2
latency: 0.02
seed: 3
"""


@pytest.fixture
def tiny_scenario(tmp_path):
    path = tmp_path / "cli_tiny.scenario"
    path.write_text(TINY)
    return str(path)


def test_run_missing_file(capsys):
    assert main(["run", "/nonexistent/x.scenario"]) == 2
    assert "not found" in capsys.readouterr().err


def test_run_invalid_scenario(tmp_path, capsys):
    path = tmp_path / "bad.scenario"
    path.write_text("name: bad\nentities: -3\n")
    assert main(["run", str(path)]) == 2
    assert "invalid scenario" in capsys.readouterr().err


def test_oracle_output(capsys):
    assert main(["oracle", "--entities", "50", "--w", "20",
                 "--n", "2", "--rate", "10", "--t", "0.2"]) == 0
    out = capsys.readouterr().out
    lines = dict(ln.split("=") for ln in out.strip().splitlines())
    assert abs(float(lines["C_pred"]) - 4.0) < 1e-9
    assert abs(float(lines["A_pred"]) - 25.21) < 0.01
    assert abs(float(lines["t_confirm_bound"]) - 10.08) < 0.01


def test_oracle_w_exceeds_n(capsys):
    assert main(["oracle", "--entities", "10", "--w", "11",
                 "--rate", "1", "--t", "0.1"]) == 2
    assert "oracle error" in capsys.readouterr().err


def test_bad_usage_returns_2(capsys):
    assert main(["no-such-command"]) == 2
    capsys.readouterr()


def test_run_writes_artifacts_and_verifies(tiny_scenario, tmp_path, capsys):
    out_dir = str(tmp_path / "out")
    assert main(["run", tiny_scenario, "--out-dir", out_dir]) == 0
    stdout = capsys.readouterr().out
    assert "scenario=cli_tiny seed=3" in stdout
    assert "measured_t_vis=" in stdout
    names = sorted(os.listdir(out_dir))
    assert names == [
        "confirmations.csv",
        "ledger-p000.dot",
        "ledger-p000.dump",
        "links.csv",
        "rejections.csv",
        "samples.csv",
        "security.csv",
    ]
    # the produced dump replays cleanly from genesis
    assert main(["verify", os.path.join(out_dir, "ledger-p000.dump")]) == 0
    assert "valid:" in capsys.readouterr().out


def test_run_rerun_is_byte_identical(tiny_scenario, tmp_path, capsys):
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert main(["run", tiny_scenario, "--out-dir", out_a, "--format", "csv"]) == 0
    assert main(["run", tiny_scenario, "--out-dir", out_b, "--format", "csv"]) == 0
    capsys.readouterr()
    for fname in os.listdir(out_a):
        with open(os.path.join(out_a, fname), "rb") as fh:
            a = fh.read()
        with open(os.path.join(out_b, fname), "rb") as fh:
            b = fh.read()
        assert a == b, fname


def test_verify_missing_file(capsys):
    assert main(["verify", "/nonexistent/ledger.dump"]) == 2
    assert "not found" in capsys.readouterr().err


def test_verify_tampered_dump(tiny_scenario, tmp_path, capsys):
    out_dir = str(tmp_path / "out")
    assert main(["run", tiny_scenario, "--out-dir", out_dir,
                 "--format", "dump"]) == 0
    capsys.readouterr()
    path = os.path.join(out_dir, "ledger-p000.dump")
    with open(path) as fh:
        lines = fh.read().splitlines()
    # flip one hex digit inside an early record's encoding
    target = lines[6]
    pos = len(target) // 2
    flipped = "0" if target[pos] != "0" else "1"
    lines[6] = target[:pos] + flipped + target[pos + 1:]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    assert main(["verify", path]) == 1
    out = capsys.readouterr().out
    assert "verification failed" in out


def test_verify_rejects_self_approval(tmp_path, capsys):
    seed = 17
    provider = make_provider("hmac", derive_seed(seed, "keys"))
    mgr_priv, _mgr_pub = provider.keypair(EntityId("mgr"))
    sign = lambda message: provider.sign(mgr_priv, message)  # noqa: E731
    anchors = []
    for i in range(3):
        payload = RecordPayload(kind=PayloadKind.GENESIS, body=b"g%d" % i)
        anchors.append(build_record(EntityId("mgr"), (), payload, None, sign))
    bad = build_record(
        EntityId("mgr"),
        (anchors[0].name, anchors[1].name),
        RecordPayload(kind=PayloadKind.APPLICATION, body=b"own-goal"),
        None,
        sign,
    )
    path = tmp_path / "self.dump"
    lines = ["#dledger-dump v1 scheme=hmac-sha256 seed=%d n=2 w_confirm=2 "
             "w_contribution=1" % seed]
    lines += [encode_record(r).hex() for r in anchors + [bad]]
    path.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(path)]) == 1
    out = capsys.readouterr().out
    assert "SELF_APPROVAL" in out and bad.name.render() in out
