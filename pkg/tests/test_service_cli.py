import csv
import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from sbp_wavelab import cli
from sbp_wavelab.service import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


class TestService:
    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}

    def test_verify_single_variant(self, client):
        r = client.post("/verify-operators", json={"variant": "gp", "n": 12, "samples": 3})
        assert r.status_code == 200
        body = r.json()
        assert body["passed"] and body["table"] == "operator_certificates"
        assert {c["criterion"] for c in body["checks"]} <= {1, 2, 3}

    def test_verify_all_includes_equivalence_and_spectrum(self, client):
        body = client.post("/verify-operators", json={"n": 12, "samples": 2}).json()
        assert {c["criterion"] for c in body["checks"]} == {1, 2, 3, 4, 5}
        assert body["passed"]

    def test_validation(self, client):
        assert client.post("/verify-operators", json={"variant": "xyz"}).status_code == 422
        assert client.post("/converge", json={"case": "snell"}).status_code == 422
        assert client.post("/verify-operators", json={"n": 3}).status_code == 422

    def test_unknown_cfl_case(self, client):
        r = client.post("/cfl-probe", json={"cases": ["nope"]})
        assert r.status_code == 422

    def test_cfl_single_1d(self, client):
        body = client.post("/cfl-probe", json={"cases": ["1d-periodic"]}).json()
        (row,) = body["rows"]
        assert row["name"] == "1d-periodic" and abs(row["threshold"] - 1.5) < 0.05
        assert body["passed"]

    def test_converge_off_protocol_drops_error_checks(self, client):
        body = client.post("/converge", json={"case": "snell", "method": "gp-improved", "levels": 1, "T": 0.2}).json()
        assert len(body["rows"]) == 1
        assert not any("error" in c["name"] for c in body["checks"])

    def test_converge_unstable_is_422(self, client):
        r = client.post("/converge", json={"case": "snell", "method": "gp-improved", "levels": 1, "T": 30.0, "ratio": 3.0})
        assert r.status_code == 422

    def test_cond_study(self, client):
        body = client.post("/cond-study", json={"sizes": [16]}).json()
        assert body["rows"][0]["nnz_o"] == 13 * 16
        names = [c["name"] for c in body["checks"]]
        assert "nnz n=16" in names and not any(n.startswith("cond_o n=") for n in names)

    def test_energy_longtime_small(self, client):
        body = client.post("/energy-longtime", json={"n": 32, "T": 2.0, "ratio": 0.5}).json()
        crits = {c["criterion"] for c in body["checks"]}
        assert crits == {9, 10}
        assert all(c["passed"] for c in body["checks"] if c["criterion"] == 10)
        assert body["rows"][0].keys() == {"t", "error", "kinetic"}


class TestConfig:
    def test_read_config(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("# comment\nlevels = 2\ntau-margin=0.3  # inline\n\ncases = a, b c\n")
        assert cli.read_config(f) == {"levels": "2", "tau_margin": "0.3", "cases": ["a", "b", "c"]}

    def test_bad_line(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("levels 2\n")
        with pytest.raises(ValueError, match="key=value"):
            cli.read_config(f)

    def test_flags_override_config(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("variant=sat\nn=16\n")
        args = cli.build_parser().parse_args(["--config", str(f), "verify-operators", "--variant", "gp"])
        assert cli._payload(args) == {"variant": "gp", "n": "16"}


class TestCli:
    def test_verify_passes(self, capsys, tmp_path):
        rc = cli.main(["--out", str(tmp_path), "verify-operators", "--variant", "sat", "--n", "12", "--samples", "2"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "[PASS]" in out and "[FAIL]" not in out
        with (tmp_path / "operator_certificates.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert rows and all(r["passed"] == "True" for r in rows)

    def test_failed_check_gives_exit_one(self, capsys):
        # the coarsest SAT3 level misses its reference error by about 10%
        rc = cli.main(["converge", "--case", "snell", "--method", "sat3", "--levels", "1"])
        out = capsys.readouterr().out
        assert rc == 1
        assert "[FAIL]  7 snell/sat3 error n=80" in out

    def test_cond_study_exit_code(self, capsys):
        assert cli.main(["cond-study", "--sizes", "16", "32"]) == 0
        assert "cond_o grows with n" in capsys.readouterr().out

    def test_config_file(self, tmp_path, capsys):
        f = tmp_path / "c.cfg"
        f.write_text("sizes = 16\n")
        assert cli.main(["--config", str(f), "cond-study"]) == 0

    def test_missing_config_is_error(self, capsys):
        assert cli.main(["--config", "/nonexistent/x.cfg", "cond-study"]) == 2

    def test_request_error_exit_two(self, capsys):
        assert cli.main(["cfl-probe", "--case", "nope"]) == 2
        assert "422" in capsys.readouterr().err

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["converge", "--case", "wrong"])
        assert exc.value.code == 2
