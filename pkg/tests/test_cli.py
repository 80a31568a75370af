import csv
import json
import subprocess
import sys

import pytest

from sdesim.cli import main


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def drop_column(rows, name):
    k = rows[0].index(name)
    return [r[:k] + r[k + 1:] if len(r) == len(rows[0]) else r for r in rows]


def test_simulate_heston_defaults(tmp_path):
    assert run(tmp_path, "simulate", "--P", "1") == 0
    files = sorted(p.name for p in tmp_path.glob("path_*.csv"))
    assert files == ["path_00000.csv"]
    rows = read_csv(tmp_path / files[0])
    assert rows[0] == ["t", "S", "v"]
    assert [float(x) for x in rows[1]] == [0.0, 1.0, 0.09]
    assert len(rows) == 2 ** 8 + 2
    man = json.loads((tmp_path / "manifest_simulate.json").read_text())
    assert man["settings"]["seed"] == 42 and man["outputs"] == files


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "simulate", "--model", "gbm", "--P", "3", "--M", "5", "--seed", "9") == 0
    for name in ("path_00000.csv", "path_00002.csv", "manifest_simulate.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_zero_paths_is_validation_error(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--P", "0") == 1
    assert "P must be" in capsys.readouterr().err


def test_unknown_flag_and_command(tmp_path):
    assert run(tmp_path, "simulate", "--bogus", "1") == 1
    assert main(["frobnicate"]) == 1


def test_missing_area_sampler_is_validation_error(tmp_path, capsys):
    assert run(tmp_path, "converge", "--model", "linear2d", "--scheme", "milstein",
               "--P", "4", "--M", "4", "--Mstart", "2") == 1
    assert "sampler" in capsys.readouterr().err


def test_runtime_failure_exit_code(tmp_path):
    # one level against the finest reference leaves nothing to fit
    assert run(tmp_path, "converge", "--model", "heston", "--P", "4", "--M", "4",
               "--Mstart", "4") == 2


def test_converge_csv_schema(tmp_path):
    assert run(tmp_path, "converge", "--model", "gbm", "--scheme", "milstein", "--P", "200",
               "--M", "6", "--Mstart", "3") == 0
    rows = read_csv(tmp_path / "converge.csv")
    assert rows[0] == ["level", "h", "rms_error", "stderr", "cpu_seconds"]
    assert [r[0] for r in rows[1:5]] == ["1", "2", "3", "4"]
    assert rows[5] == ["slope", "intercept", "residual"]
    assert 0.7 < float(rows[6][0]) < 1.3


def test_converge_json(tmp_path):
    assert run(tmp_path, "converge", "--P", "50", "--M", "5", "--Mstart", "3",
               "--format", "json") == 0
    out = json.loads((tmp_path / "converge.json").read_text())
    assert len(out["rms_error"]) == 3 and out["reference"] == "exact"


def test_converge_thread_count_does_not_change_numbers(tmp_path):
    outs = []
    for t in ("1", "3"):
        d = tmp_path / t
        assert run(d, "converge", "--model", "linear2d", "--scheme", "cg_one",
                   "--area-sampler", "rw", "--P", "40", "--M", "5", "--Mstart", "2",
                   "--threads", t) == 0
        outs.append(drop_column(read_csv(d / "converge.csv"), "cpu_seconds"))
    assert outs[0] == outs[1]
    m1 = (tmp_path / "1" / "manifest_converge.json").read_bytes()
    assert m1 == (tmp_path / "3" / "manifest_converge.json").read_bytes()


def test_weak_strong_listing_values(tmp_path):
    assert run(tmp_path, "weak-strong") == 0
    rows = read_csv(tmp_path / "weak_strong.csv")
    assert rows[0] == ["t", "mean_binomial", "mean_gaussian", "analytic"]
    assert len(rows) == 22
    assert float(rows[-1][3]) == pytest.approx(20.0855, abs=1e-4)


def test_weak_strong_rejects_non_integer_steps(tmp_path):
    assert run(tmp_path, "weak-strong", "--h", "0.3") == 1


def test_selftest(tmp_path, capsys):
    assert run(tmp_path, "selftest") == 0
    assert "checks passed" in capsys.readouterr().out
    rows = read_csv(tmp_path / "selftest.csv")
    assert all(r[1] == "1" for r in rows[1:])


def test_levy_test_rw(tmp_path):
    assert run(tmp_path, "levy-test", "--sampler", "rw", "--h", "0.1", "--samples", "1e5") == 0
    stats = read_csv(tmp_path / "levy_stats.csv")
    ks = float(stats[1][stats[0].index("ks")])
    assert ks < 0.01
    assert len(read_csv(tmp_path / "levy_samples.csv")) == 10**5 + 1


def test_levy_test_cond(tmp_path):
    assert run(tmp_path, "levy-test", "--sampler", "cond", "--h", "0.1", "--q", "100",
               "--samples", "5000") == 0
    stats = read_csv(tmp_path / "levy_stats.csv")
    assert float(stats[1][stats[0].index("ks")]) < 0.03


def test_fk_check_pass(tmp_path, capsys):
    assert run(tmp_path, "fk-check", "--paths", "20000") == 0
    assert capsys.readouterr().out.startswith("PASS")
    rows = read_csv(tmp_path / "fk_check.csv")
    assert [r[0] for r in rows[1:]] == ["pde", "mc", "exact"]


def test_config_precedence_toml(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('model = "gbm"\nP = 2\nM = 4\nseed = 5\n')
    assert main(["simulate", "--config", str(cfg), "--P", "1", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest_simulate.json").read_text())
    assert man["settings"]["P"] == 1
    assert man["settings"]["seed"] == 5 and man["settings"]["model"] == "gbm"


def test_config_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1


def test_manifest_reruns_identically(tmp_path):
    first = tmp_path / "first"
    assert run(first, "converge", "--model", "heston", "--P", "20", "--M", "6",
               "--Mstart", "3", "--seed", "3") == 0
    second = tmp_path / "second"
    assert main(["converge", "--config", str(first / "manifest_converge.json"),
                 "--out", str(second)]) == 0
    a = drop_column(read_csv(first / "converge.csv"), "cpu_seconds")
    b = drop_column(read_csv(second / "converge.csv"), "cpu_seconds")
    assert a == b


def test_model_params_flag(tmp_path):
    assert run(tmp_path, "simulate", "--model", "heston", "--param", "rho=-0.3",
               "--param", "v0=0.04", "--P", "1", "--M", "3") == 0
    rows = read_csv(tmp_path / "path_00000.csv")
    assert float(rows[1][2]) == 0.04


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "sdesim", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "sdesim" in out.stdout
