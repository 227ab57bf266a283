from gsl2sql import fixture_text
from gsl2sql.cli import run
from gsl2sql.semantics import dump_io, dump_state
from gsl2sql.verifier import Violation, hrs_fixture_cases, replay


def _hrs_file(tmp_path):
    p = tmp_path / "hrs.boo"
    p.write_text(fixture_text("hrs.boo"))
    return str(p)


def test_compile_writes_schema_and_procedures(tmp_path):
    out = tmp_path / "out.sql"
    assert run(["compile", _hrs_file(tmp_path), "--output", str(out)]) == 0
    text = out.read_text()
    assert "CREATE TABLE `Reservation`(`oid` INTEGER AUTO_INCREMENT, PRIMARY KEY (`oid`), `status` CHAR(30));" in text
    assert "CREATE PROCEDURE `Hotel_reserve` (IN `this?` INTEGER" in text
    assert "INSERT INTO `Reservation` () VALUE ();" in text


def test_compile_is_byte_deterministic(tmp_path, capsys):
    path = _hrs_file(tmp_path)
    assert run(["compile", path]) == 0
    first = capsys.readouterr().out
    assert run(["compile", path]) == 0
    assert capsys.readouterr().out == first


def test_signal_guard_mode(tmp_path, capsys):
    assert run(["compile", _hrs_file(tmp_path), "--guard-mode", "signal"]) == 0
    assert "SIGNAL SQLSTATE '45000'" in capsys.readouterr().out


def test_emit_schema(tmp_path, capsys):
    assert run(["emit-schema", _hrs_file(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "CREATE PROCEDURE" not in out and out.count("CREATE TABLE") == 13


def test_model_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.boo"
    bad.write_text("class A { attributes x : }")
    assert run(["compile", str(bad)]) == 1
    assert "parse error" in capsys.readouterr().err
    bad.write_text("class A { attributes x : Intt }")
    assert run(["emit-schema", str(bad)]) == 1
    assert "model error" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    assert run(["compile"]) == 2
    assert run(["verify", "--mutation", "nope"]) == 2
    assert run(["interpret", _hrs_file(tmp_path), "--operation", "Hotel.nope", "--state", "x"]) == 2


def test_interpret_fixture(tmp_path, capsys):
    name, m, cls, op, s, io = hrs_fixture_cases()[0]
    st = tmp_path / "state.txt"
    st.write_text(dump_state(s) + "\n" + dump_io(io) + "\n")
    assert run(["interpret", _hrs_file(tmp_path), "--operation", "Hotel.reserve", "--state", str(st)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("-- after-state 1 of 1\n")
    assert 'Reservation#1.status = "unconfirmed"' in out
    assert "io r! = Reservation#1" in out


def test_verify_fixtures_only(capsys):
    assert run(["verify", "--seed", "0", "--cases", "0"]) == 0
    out = capsys.readouterr().out
    assert "fixture hrs-full: simulated" in out
    assert out.rstrip().endswith("violations: 0")


def test_verify_generated(capsys):
    assert run(["verify", "--seed", "5", "--cases", "40"]) == 0
    out = capsys.readouterr().out
    assert "cases: 40" in out and "violations: 0" in out


def test_verify_mutation_fails_with_replayable_report(tmp_path, capsys):
    reports = tmp_path / "reports"
    code = run(["verify", "--seed", "0", "--cases", "40", "--mutation", "drop_index_shift",
                "--report-dir", str(reports)])
    assert code == 1
    out = capsys.readouterr().out
    assert "first violation:" in out and "pattern 23" in out
    files = sorted(reports.iterdir())
    assert files
    assert isinstance(replay(files[0].read_text()), Violation)
