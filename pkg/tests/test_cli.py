import json
import subprocess
import sys

import numpy as np
import pytest

from tnc import cli, persistence
from tnc.dataset import Image, load_mnist_binary, write_pgm

FAST = ["--n-samples", "150", "--sweeps", "2"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def trained(synthetic_mnist, tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    model, full, circuit = d / "m.json", d / "full.json", d / "c.json"
    assert cli.main(["train", "--data", str(synthetic_mnist), "--ntilde", "3", "--seed", "1",
                     "--out", str(model), "--full-out", str(full)] + FAST) == 0
    assert cli.main(["compile", "--model", str(model), "--out", str(circuit)]) == 0
    return {"dir": d, "model": model, "full": full, "circuit": circuit, "data": synthetic_mnist}


def test_train_is_byte_identical(trained):
    again = trained["dir"] / "again.json"
    assert cli.main(["train", "--data", str(trained["data"]), "--ntilde", "3", "--seed", "1",
                     "--out", str(again)] + FAST) == 0
    assert again.read_bytes() == trained["model"].read_bytes()


def test_model_files(trained):
    m = persistence.load_model(trained["model"])
    assert m.kind == "mps" and m.model.n_sites == 3
    c = persistence.load_model(trained["circuit"])
    assert c.kind == "circuit" and len(c.circuit.gates) == 2


def test_select(trained, capsys):
    code, out, _ = run(capsys, "select", "--model", trained["full"], "--ntilde", 3)
    assert code == 0
    doc = json.loads(out)
    assert len(doc["chosen"]) == 3
    assert doc["chosen"] == persistence.load_model(trained["model"]).model.selected


def test_classify_schemes_agree(trained, capsys):
    test = load_mnist_binary(trained["data"], "test")
    for k in range(4):
        path = trained["dir"] / f"img{k}.pgm"
        write_pgm(Image(np.rint(test.images[k] * 255) / 255), path)
        outs = []
        for scheme in ("a", "b"):
            code, out, _ = run(capsys, "classify", "--circuit", trained["circuit"], "--image", path, "--scheme", scheme)
            assert code == 0
            outs.append(json.loads(out))
        assert outs[0]["decision"] == outs[1]["decision"]
        assert outs[0]["p0"] == pytest.approx(outs[1]["p0"], abs=1e-10)


def test_evaluate_modes(trained, capsys):
    reports = {}
    for mode in ("mps", "a", "b"):
        code, out, _ = run(capsys, "evaluate", "--data", trained["data"], "--model", trained["circuit"], "--mode", mode)
        assert code == 0
        reports[mode] = json.loads(out)
    assert reports["mps"]["failures"] == reports["a"]["failures"] == reports["b"]["failures"]
    assert reports["a"]["total"] == len(load_mnist_binary(trained["data"], "test"))


def test_equiv_check(trained, capsys):
    code, out, _ = run(capsys, "equiv-check", "--data", trained["data"], "--circuit", trained["circuit"])
    assert code == 0 and json.loads(out)["ok"]


def test_equiv_check_detects_mismatch(trained, capsys):
    doc = json.loads(trained["circuit"].read_text())
    doc["gates"]["u1"] = [0.0, 1.0, 1.0, 0.0]  # valid but wrong gate
    bad = trained["dir"] / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run(capsys, "equiv-check", "--data", trained["data"], "--circuit", bad)
    assert code == 4 and "numeric" in err


def test_noise(trained, capsys):
    code, out, _ = run(capsys, "noise", "--data", trained["data"], "--circuit", trained["circuit"],
                       "--eta", 0.9977, "--angle-deg", 1.588, "--runs", 5, "--seed", 3)
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"A", "B"}
    assert doc["A"]["min_rate"] == min(doc["A"]["rates"]) and len(doc["B"]["rates"]) == 5


def test_sweep(trained, capsys, tmp_path):
    csv_path = tmp_path / "s.csv"
    code, out, _ = run(capsys, "--threads", 1, "sweep", "--data", trained["data"], "--ntilde-list", "2,3",
                       "--reps", 1, "--out", csv_path, *FAST)
    assert code == 0
    assert csv_path.read_text().splitlines()[0].startswith("ntilde,rep,train_acc,test_acc")
    assert set(json.loads(out)) == {"2", "3"}


def test_usage_errors(trained, capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "train", "--ntilde", "x")[0] == 2
    code, _, err = run(capsys, "select", "--model", trained["model"], "--ntilde", 9)
    assert code == 2 and err


def test_data_errors(trained, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", tmp_path / "missing", "--ntilde", 3, "--out", tmp_path / "x.json")
    assert code == 3 and "error" in err
    broken = tmp_path / "broken.json"
    broken.write_text(trained["model"].read_text()[:100])
    assert run(capsys, "compile", "--model", broken, "--out", tmp_path / "y.json")[0] == 3
    pgm = tmp_path / "c.ppm"
    pgm.write_bytes(b"P6\n28 28\n255\n" + bytes(3 * 784))
    assert run(capsys, "classify", "--circuit", trained["circuit"], "--image", pgm)[0] == 3


def test_console_entry_point(trained):
    proc = subprocess.run([sys.executable, "-m", "tnc.cli", "equiv-check", "--data", str(trained["data"]),
                           "--model", str(trained["model"])], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["ok"]
