import socket
import threading
import time

import pytest

from damh.cli import main
from damh.io import parse_chain, parse_series, read_surrogate

LIN = ["--model", "linear", "--phi", "0.9", "--tau2", "0.5", "--sigma2", "1"]


@pytest.fixture
def lin_csv(tmp_path):
    p = tmp_path / "lin.csv"
    assert main(["simulate", *LIN, "--n", "500", "--seed", "1", "--out", str(p)]) == 0
    return p


def test_simulate_500_rows(lin_csv):
    s = parse_series(lin_csv.read_text())
    assert len(s) == 500 and s.meta["seed"] == "1" and s.meta["config.model"] == "linear"


def test_simulate_truth_file(tmp_path):
    out, truth = tmp_path / "s.csv", tmp_path / "x.csv"
    assert main(["simulate", *LIN, "--n", "20", "--seed", "2", "--out", str(out), "--truth", str(truth)]) == 0
    assert len(parse_series(truth.read_text())) == 20


def test_learn_then_filter_then_diagnose(lin_csv, tmp_path, capsys):
    sur = tmp_path / "sur.txt"
    assert main(["learn", "--model", "linear", "--input", str(lin_csv), "--seed", "3",
                 "--phase1-iters", "400", "--phase2-iters", "300", "--out", str(sur)]) == 0
    s, fields = read_surrogate(sur)
    assert fields["names"] == "phi,tau2,sigma2" and s.dim == 3
    chain_path = tmp_path / "sur.txt.chain.csv"
    samples, names, meta = parse_chain(chain_path.read_text())
    assert samples.shape == (300, 3) and float(meta["wall_time"]) > 0
    capsys.readouterr()
    assert main(["diagnose", "--chain", str(chain_path)]) == 0
    out = capsys.readouterr().out
    assert "param,iat,ess,eff,k_cut" in out
    est = tmp_path / "est.csv"
    assert main(["filter", "--model", "linear", "--input", str(lin_csv), "--surrogate", str(sur),
                 "--window", "20", "--phase2-iters", "50", "--n-mixture", "5", "--threshold", "0",
                 "--seed", "4", "--out", str(est)]) == 0
    rows = [ln for ln in est.read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "t,step,mean_y,var_y,alpha1,alpha2,gap,event"
    # with a surrogate supplied, estimates start from the second observation
    assert len(rows) == 1 + 499 and rows[1].split(",")[1] == "2"


def test_config_file_and_override(tmp_path, lin_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = linear\nphi = 0.5\ntau2 = 0.5\nsigma2 = 1\nn = 30\n")
    out = tmp_path / "s.csv"
    assert main(["simulate", "--config", str(cfg), "--n", "12", "--seed", "1", "--out", str(out)]) == 0
    s = parse_series(out.read_text())
    assert len(s) == 12 and s.meta["config.phi"] == "0.5"


def test_oracle_verb(capsys):
    assert main(["oracle", "--model", "ou2d", "--n", "30", "--trials", "2", "--seed", "1"]) == 0
    assert "passed=True" in capsys.readouterr().out


@pytest.mark.parametrize("argv,code", [
    (["learn", "--model", "linear", "--input", "/nonexistent.csv"], 2),
    (["simulate", "--model", "linaer"], 2),
    (["simulate", "--model", "linear"], 2),  # missing parameter values
    (["diagnose"], 2),
])
def test_exit_codes(argv, code):
    assert main(argv) == code


def test_data_error_exit_code(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,y\n0,1\n0,2\n")
    assert main(["learn", "--model", "linear", "--input", str(p)]) == 3


def test_numerical_error_exit_code(tmp_path):
    p = tmp_path / "flat.csv"
    p.write_text("t,y\n" + "".join(f"{i},1.0\n" for i in range(30)))
    # a start far outside the prior support cannot be evaluated
    assert main(["learn", "--model", "linear", "--input", str(p), "--phi", "3", "--tau2", "1",
                 "--sigma2", "1", "--phase1-iters", "10"]) == 4


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as ei:
        main(["simulate", "--bogus", "1"])
    assert ei.value.code == 2


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def server():
    import uvicorn

    port = _free_port()
    srv = uvicorn.Server(uvicorn.Config("damh.service.app:app", host="127.0.0.1", port=port,
                                        log_level="warning"))
    th = threading.Thread(target=srv.run, daemon=True)
    th.start()
    for _ in range(100):
        if srv.started:
            break
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    srv.should_exit = True
    th.join(5)


def test_remote_matches_local(server, tmp_path):
    local, remote = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", *LIN, "--n", "25", "--seed", "7"]
    assert main([*args, "--out", str(local)]) == 0
    assert main([*args, "--out", str(remote), "--server", server]) == 0

    def body(p):  # the recorded output path is the only expected difference
        return [ln for ln in p.read_text().splitlines() if not ln.startswith("# config.out=")]

    assert body(local) == body(remote)


def test_remote_filter_and_errors(server, tmp_path, lin_csv):
    est = tmp_path / "est.csv"
    assert main(["filter", "--model", "linear", "--input", str(lin_csv), "--window", "15",
                 "--phase1-iters", "200", "--phase2-iters", "30", "--n-mixture", "3",
                 "--seed", "1", "--out", str(est), "--server", server]) == 0
    rows = [ln for ln in est.read_text().splitlines() if not ln.startswith("#")]
    assert rows[0].startswith("t,step,") and len(rows) > 400
    assert main(["simulate", "--model", "linaer", "--server", server]) == 2
