import csv
import io
import json
import math

import pytest

from bellsim import formats
from bellsim.cli import main
from bellsim.coincidence import match, tally
from bellsim.core import NoiseParams, SimConfig, Strategy
from bellsim.engine import run
from bellsim.estimator import estimate


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_events_roundtrip():
    out = run(SimConfig(n_trials=300, p_delay=0.5, seed=1, noise=NoiseParams(dark_rate=0.05)))
    buf = io.StringIO()
    formats.write_events(out, buf)
    lines = buf.getvalue().splitlines()
    assert json.loads(lines[0]) == {"config": out.config.to_dict()}
    assert set(json.loads(lines[1])) == {"side", "setting", "outcome", "t", "bullet"}
    ev = formats.read_events(io.StringIO(buf.getvalue()))
    assert ev.left == out.left and ev.right == out.right
    assert ev.has_bullet_ids
    assert SimConfig.from_dict(ev.config) == out.config


@pytest.mark.parametrize("line,needle", [
    ('{"side":"C","setting":1,"outcome":0,"t":0,"bullet":0}', "side"),
    ('{"side":"A","setting":3,"outcome":0,"t":0,"bullet":0}', "setting"),
    ('not json', "JSON"),
    ('{"side":"A","setting":1,"outcome":0}', "t"),
])
def test_malformed_lines(line, needle):
    good = '{"side":"A","setting":1,"outcome":0,"t":0,"bullet":0}\n'
    with pytest.raises(formats.MalformedEvents) as exc:
        formats.read_events(io.StringIO(good + line + "\n"))
    assert exc.value.line_no == 2
    assert needle.lower() in str(exc.value).lower()


def test_missing_bullets_read_as_dark():
    text = ('{"side":"A","setting":1,"outcome":0,"t":0}\n'
            '{"side":"B","setting":1,"outcome":1,"t":0}\n')
    ev = formats.read_events(io.StringIO(text))
    assert not ev.has_bullet_ids and len(ev.left) == len(ev.right) == 1


def test_sweep_csv_header():
    from bellsim.estimator import SweepRow
    buf = io.StringIO()
    formats.write_sweep([SweepRow(0.0, 2.0, 2.0, 0.01, 0.66, 2.0)], buf)
    assert buf.getvalue().splitlines()[0] == "φ_deg,S_coinc,S_event,stderr,singles_frac,S_qm"
    assert formats.read_sweep(io.StringIO(buf.getvalue()))[0]["S_qm"] == 2.0


# -- CLI ----------------------------------------------------------------------


def run_cli(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_cli_run_calibrated(tmp_path, capsys):
    ev = tmp_path / "events.jsonl"
    code, out, err = run_cli(capsys, "run", "--strategy", "app1", "--n", "100000",
                             "--phi", "22.5deg", "--pmap", "calibrated", "--seed", "7",
                             "--out", str(ev))
    assert code == 0
    rows = {r["basis"]: r for r in read_csv(out)}
    c, e = rows["coincidence"], rows["event"]
    assert abs(float(c["S_abs"]) - 2 * math.sqrt(2)) <= 3 * float(c["stderr"])
    assert abs(float(e["S_abs"]) - 2) <= 3 * float(e["stderr"])
    assert "singles_fraction=" in err
    assert list(rows["coincidence"]) == formats.SUMMARY_COLUMNS

    code, out2, _ = run_cli(capsys, "analyze", "--in", str(ev))
    assert code == 0
    assert read_csv(out2)[0] == c


def test_cli_table9(capsys):
    code, out, _ = run_cli(capsys, "run", "--strategy", "table:9", "--n", "1000",
                           "--seed", "1", "--out", "")
    e = {r["basis"]: r for r in read_csv(out)}["event"]
    assert code == 0 and float(e["S_abs"]) == 2


def test_cli_bad_config(capsys):
    code, _, err = run_cli(capsys, "run", "--n", "0", "--out", "")
    assert code == 2 and "n_trials" in err
    code, _, err = run_cli(capsys, "run", "--window", "40", "--out", "")
    assert code == 2 and "error" in err


def test_cli_unknown_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--bogus"])
    assert exc.value.code == 2


def test_cli_malformed_file(tmp_path, capsys):
    f = tmp_path / "bad.jsonl"
    f.write_text('{"config": {}}\n{"side":"A","setting":1,"outcome":0,"t":0,"bullet":0}\n'
                 '{"side":"A","setting":1}\n')
    code, _, err = run_cli(capsys, "analyze", "--in", str(f))
    assert code == 3 and "line 3" in err


def test_cli_window_scan_falls_toward_event_value(tmp_path, capsys):
    ev = tmp_path / "e.jsonl"
    run_cli(capsys, "run", "--n", "50000", "--p-delay", "1", "--seed", "3", "--out", str(ev),
            "--summary", str(tmp_path / "s.csv"))
    fig = tmp_path / "scan.png"
    code, out, _ = run_cli(capsys, "analyze", "--in", str(ev), "--window-scan", "5,29,30,45,60",
                           "--figure", str(fig))
    assert code == 0 and fig.stat().st_size > 0
    s = {int(r["window"]): float(r["S_abs"]) for r in read_csv(out)}
    se = {int(r["window"]): float(r["stderr"]) for r in read_csv(out)}
    assert s[5] == s[29] == 4.0
    assert s[30] < s[29]
    assert abs(s[60] - 2) <= 3 * se[60]


def test_cli_sweep_with_figure(tmp_path, capsys):
    fig = tmp_path / "sweep.png"
    code, out, _ = run_cli(capsys, "sweep", "--pmap", "off", "--n", "5000", "--steps", "4",
                           "--figure", str(fig))
    assert code == 0 and fig.stat().st_size > 0
    rows = formats.read_sweep(io.StringIO(out))
    assert len(rows) == 4
    assert all(r["S_coinc"] == 2.0 for r in rows)  # p = 0 pins the curve


def test_cli_config_file_and_env(tmp_path, capsys, monkeypatch):
    cfgf = tmp_path / "c.txt"
    cfgf.write_text("strategy = app2\nn = 400\nseed = 11\n")
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_cli(capsys, "run", "--config", str(cfgf), "--out", str(a))
    head = json.loads(a.read_text().splitlines()[0])["config"]
    assert head["strategy"] == "app2" and head["n_trials"] == 400 and head["seed"] == 11
    run_cli(capsys, "run", "--config", str(cfgf), "--seed", "12", "--out", str(b))
    assert json.loads(b.read_text().splitlines()[0])["config"]["seed"] == 12

    monkeypatch.setenv("BELLSIM_SEED", "99")
    assert run_cli(capsys, "run", "--n", "200", "--out", str(a))[0] == 0
    assert json.loads(a.read_text().splitlines()[0])["config"]["seed"] == 99


def test_cli_identical_flags_identical_files(tmp_path, capsys):
    paths = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        run_cli(capsys, "run", "--n", "2000", "--p-delay", "0.5", "--seed", "5",
                "--noise-dark", "0.01", "--out", str(d / "e.jsonl"), "--summary",
                str(d / "s.csv"), "--matches", str(d / "m.jsonl"), "--tally", str(d / "t.csv"))
        paths.append(d)
    for name in ("e.jsonl", "s.csv", "m.jsonl", "t.csv"):
        assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()


def test_cli_oracle(capsys):
    code, out, _ = run_cli(capsys, "oracle", "--which", "app1", "--p", "1")
    rows = read_csv(out)
    assert code == 0
    assert {r["basis"]: float(r["S_abs"]) for r in rows} == {"coincidence": 4.0, "event": 2.0}
    code, out, _ = run_cli(capsys, "oracle", "--which", "pmap", "--steps", "3")
    assert code == 0 and len(read_csv(out)) == 3


def test_cli_selftest_list_and_subset(capsys):
    code, out, _ = run_cli(capsys, "selftest", "--list")
    assert code == 0 and "determinism" in out.split()
    code, out, _ = run_cli(capsys, "selftest", "--only", "determinism")
    assert code == 0 and "PASS" in out
    code, _, _ = run_cli(capsys, "selftest", "--only", "nope")
    assert code == 2


def test_selftest_detects_flip_noise():
    from bellsim.selftest import run_checks
    res = {r.name: r.ok for r in run_checks(
        ["table_event_chsh_bound", "event_chsh_bound", "app1_coincidence_matches_oracle"],
        NoiseParams(flip_prob=0.5))}
    assert res["table_event_chsh_bound"] and res["event_chsh_bound"]
    assert not res["app1_coincidence_matches_oracle"]


def test_match_and_tally_writers():
    out = run(SimConfig(strategy=Strategy.TABLE, table=1, n_trials=4))
    m = match(out.left, out.right, 5)
    buf = io.StringIO()
    formats.write_match(m, buf)
    assert len(buf.getvalue().splitlines()) == 4
    buf = io.StringIO()
    formats.write_tally(tally(m), buf)
    assert len(buf.getvalue().splitlines()) == 5
    assert estimate(tally(m)).n_singles == 0
