import csv
import subprocess
import sys

import numpy as np
import pytest

from prommask import io
from prommask.cli import main
from prommask.exceptions import NumericalFailureError

FAST_CONFIG = "iterations=30\nbatch=4\nmc_samples=2\nnum_runs=2\nalpha=4\n"


@pytest.fixture
def data(tmp_path):
    path = tmp_path / "d.pksp"
    assert main(["phantom-gen", "--family", "concentric", "--count", "5", "--size", "16x20",
                 "--seed", "3", "--out", str(path)]) == 0
    return path


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_phantom_gen(data, tmp_path):
    k = io.read_kspace(data)
    assert k.shape == (5, 16, 20)
    assert io.target_path(data).exists()
    again = tmp_path / "e.pksp"
    main(["phantom-gen", "--family", "concentric", "--count", "5", "--size", "16x20", "--seed", "3", "--out", str(again)])
    assert again.read_bytes() == data.read_bytes()


def test_optimize_outputs(data, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(FAST_CONFIG)
    mask, trace = tmp_path / "m.pmsk", tmp_path / "t.csv"
    assert main(["optimize", "--data", str(data), "--config", str(cfg), "--out-mask", str(mask),
                 "--trace", str(trace)]) == 0
    values, shape, _, vt = io.read_mask(mask)
    assert vt == io.BINARY and values.sum() == 320 // 4 and shape == (16, 20)
    probs, _, _, vt = io.read_mask(io.probability_path(mask))
    assert vt == io.PROBABILITY and probs.sum() <= 80 + 1e-4
    rows = _rows(trace)
    assert rows[0] == ["iteration", "loss", "sum_theta", "S", "tau"]
    assert len(rows) == 31


def test_optimize_alpha_one(data, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("iterations=5\nbatch=2\nmc_samples=1\nnum_runs=1\nalpha=1\n")
    mask = tmp_path / "m.pmsk"
    assert main(["optimize", "--data", str(data), "--config", str(cfg), "--out-mask", str(mask)]) == 0
    assert io.read_mask(mask)[0].min() == 1


def test_optimize_numerical_failure(data, tmp_path, monkeypatch):
    import prommask.cli as cli
    from prommask.optim import TrainTrace

    def boom(*args, **kwargs):
        trace = TrainTrace(4)
        trace.append(0, 0.5, 2.0, 4, 1.0)
        raise NumericalFailureError("non-finite gradient", iteration=1, trace=trace)

    monkeypatch.setattr(cli, "optimize_runs", boom)
    trace = tmp_path / "t.csv"
    code = main(["optimize", "--data", str(data), "--out-mask", str(tmp_path / "m.pmsk"), "--trace", str(trace)])
    assert code == 3
    assert len(_rows(trace)) == 2


def test_baseline(tmp_path):
    out = tmp_path / "e.pmsk"
    assert main(["baseline", "--kind", "equispaced", "--alpha", "4", "--size", "32x320", "--seed", "1",
                 "--out", str(out)]) == 0
    assert io.read_mask(out)[0].sum() == 80
    again = tmp_path / "f.pmsk"
    main(["baseline", "--kind", "equispaced", "--alpha", "4", "--size", "32x320", "--seed", "1", "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()
    assert main(["baseline", "--kind", "gaussian", "--alpha", "8", "--size", "16x16", "--out", str(out)]) == 0
    assert io.read_mask(out)[0].sum() == 32


def test_evaluate(data, tmp_path):
    full, empty = tmp_path / "full.pmsk", tmp_path / "zero.pmsk"
    io.write_mask(full, np.ones(320), (16, 20))
    io.write_mask(empty, np.zeros(20), (16, 20), "1d")
    out = tmp_path / "r.csv"
    assert main(["evaluate", "--data", str(data), "--mask", str(full), "--metrics", "psnr,ssim,nmse",
                 "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["slice", "psnr", "ssim", "nmse"] and len(rows) == 5 + 2 and rows[-1][0] == "mean"
    assert all(float(r[3]) <= 1e-9 for r in rows[1:])
    assert main(["evaluate", "--data", str(data), "--mask", str(empty), "--metrics", "nmse", "--out", str(out)]) == 0
    assert all(float(r[1]) == pytest.approx(1.0) for r in _rows(out)[1:])


def test_evaluate_without_target_file(data, tmp_path):
    io.target_path(data).unlink()
    full = tmp_path / "full.pmsk"
    io.write_mask(full, np.ones(320), (16, 20))
    out = tmp_path / "r.csv"
    assert main(["evaluate", "--data", str(data), "--mask", str(full), "--metrics", "nmse", "--out", str(out)]) == 0
    assert float(_rows(out)[-1][1]) <= 1e-9


def test_export(data, tmp_path):
    mask = tmp_path / "m.pmsk"
    io.write_mask(mask, np.ones(20), (16, 20), "1d")
    pgm = tmp_path / "m.pgm"
    assert main(["export", "--mask", str(mask), "--out", str(pgm)]) == 0
    assert pgm.read_bytes().startswith(b"P5\n20 16\n255\n")
    np.testing.assert_array_equal(io.read_pgm(pgm), 255)
    first = pgm.read_bytes()
    main(["export", "--mask", str(mask), "--out", str(pgm)])
    assert pgm.read_bytes() == first
    recon = tmp_path / "r.pgm"
    assert main(["export", "--recon", str(data), "--mask", str(mask), "--slice", "2", "--out", str(recon)]) == 0
    image = io.read_pgm(recon)
    assert image.min() == 0 and image.max() == 255


def test_exit_codes(data, tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["baseline", "--kind", "radial", "--alpha", "2", "--size", "8x8", "--out", "x"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["export", "--out", str(tmp_path / "x.pgm")])
    assert info.value.code == 1
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("gamma=3\n")
    assert main(["optimize", "--data", str(data), "--config", str(bad_cfg), "--out-mask", "m"]) == 1
    assert main(["evaluate", "--data", str(data), "--mask", "m", "--metrics", "mae", "--out", "r"]) == 1
    assert main(["optimize", "--data", str(tmp_path / "missing.pksp"), "--out-mask", "m"]) == 2
    junk = tmp_path / "junk.pksp"
    junk.write_bytes(b"not a pksp file at all")
    assert main(["evaluate", "--data", str(junk), "--mask", "m", "--out", "r"]) == 2
    other = tmp_path / "o.pmsk"
    io.write_mask(other, np.ones(64), (8, 8))
    assert main(["evaluate", "--data", str(data), "--mask", str(other), "--out", str(tmp_path / "r.csv")]) == 2
    assert "data error" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    out = tmp_path / "g.pmsk"
    proc = subprocess.run([sys.executable, "-m", "prommask", "baseline", "--kind", "gaussian", "--alpha", "4",
                           "--size", "8x8", "--out", str(out)], capture_output=True)
    assert proc.returncode == 0 and out.exists()
