import json

import numpy as np
import pytest
import yaml

from vortexeq.cli import COMMANDS, ConfigError, RunConfig, main, run


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def report(out):
    with open(out / "report.json") as fh:
        return json.load(fh)


def strip_time(path):
    doc = json.loads(path.read_text())
    doc.pop("timestamp")
    return doc


def test_check_gamma_resonant(tmp_path):
    cfg = write(tmp_path, "gammas: [-2, 1, -2]\n")
    assert main(["check-gamma", "--config", cfg, "--out", str(tmp_path)]) == 2
    r = report(tmp_path)
    assert r["result"]["worst_subset"] == [1, 2, 3]
    assert r["schema_version"] == "1.0"
    assert r["config"]["gammas"] == [-2, 1, -2]


def test_check_gamma_sinh_poisson(tmp_path):
    cfg = write(tmp_path, "options:\n  sinh_poisson: {m: 2, n: 3, tau: 2.0}\n")
    assert main(["check-gamma", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert 2.0 in report(tmp_path)["result"]["sinh_poisson"]["resonant_taus"]


def test_green_test_passes(tmp_path):
    assert main(["green-test", "--out", str(tmp_path)]) == 0
    r = report(tmp_path)["result"]
    assert r["passed"] and all(c["passed"] for c in r["checks"].values())


def test_classify_sphere(tmp_path):
    cfg = write(tmp_path, "surface: {kind: round_sphere}\ngammas: [-3, 1, -3]\n")
    assert main(["classify-sphere", "--config", cfg, "--out", str(tmp_path)]) == 0
    sol = report(tmp_path)["result"]["solutions"][0]
    assert sol["cos_theta"] == pytest.approx(0.5, abs=1e-9)


def test_find_equilibria_writes_log(tmp_path):
    cfg = write(tmp_path, "gammas: [1, -1]\n")
    assert main(["find-equilibria", "--config", cfg, "--out", str(tmp_path), "--grid", "12"]) == 0
    lines = (tmp_path / "sweeps.jsonl").read_text().splitlines()
    entries = [json.loads(x) for x in lines]
    assert [e["sweep"] for e in entries] == list(range(1, len(entries) + 1))
    r = report(tmp_path)
    assert r["config"]["options"]["grid"] == 12
    assert r["result"]["termination"] == "Converged"


def test_find_equilibria_refuses(tmp_path):
    cfg = write(tmp_path, "gammas: [-2, 1, -2]\n")
    assert main(["find-equilibria", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert report(tmp_path)["result"]["subset"] == [1, 2, 3]


def test_morse_check(tmp_path):
    cfg = write(tmp_path, "gammas: [1, 1]\noptions:\n  points: [[0, 0], [0.5, 0.5]]\n")
    assert main(["morse-check", "--config", cfg, "--out", str(tmp_path)]) == 0
    r = report(tmp_path)["result"]
    assert r["zero_modes"] == 2 and r["nondegenerate"]
    cfg = write(tmp_path, "gammas: [1, 1]\noptions:\n  points: [[0, 0], [0.3, 0.1]]\n")
    assert main(["morse-check", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_simulate_csv(tmp_path):
    cfg = write(tmp_path, "gammas: [1, -1]\noptions: {T: 0.5, dt: 0.01, initial: [[0.2, 0.5], [0.3, 0.5]]}\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    data = np.genfromtxt(tmp_path / "trajectory.csv", delimiter=",", names=True)
    assert data.dtype.names == ("time", "p1_x", "p1_y", "p2_x", "p2_y", "H", "min_pair_dist")
    assert len(data) == 6
    assert np.ptp(data["H"]) < 1e-12


def test_symmetric_search(tmp_path):
    cfg = write(tmp_path, "surface: {kind: round_sphere}\ngammas: [-3, 1, -3]\noptions: {method: fixed_circle}\n")
    assert main(["symmetric-search", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert report(tmp_path)["result"]["report"]["grad_norm"] < 1e-8
    cfg = write(tmp_path, "surface: {kind: round_sphere}\ngammas: [1, 1, 1]\n")
    assert main(["symmetric-search", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_green_dump(tmp_path):
    assert main(["green-dump", "--out", str(tmp_path), "--seed", "2"]) == 0
    data = np.genfromtxt(tmp_path / "green.csv", delimiter=",", names=True)
    assert len(data) == 64 * 64
    assert abs(np.nanmean(data["G"])) < 1e-3


def test_conformal_grid_from_file(tmp_path):
    n = 32
    x = np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    np.save(tmp_path / "u.npy", 0.1 * np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y))
    cfg = write(tmp_path, "surface: {kind: conformal_torus, u_grid: u.npy}\n")
    assert main(["green-test", "--config", cfg, "--out", str(tmp_path)]) == 0
    np.savetxt(tmp_path / "k.csv", 2 + np.cos(2 * np.pi * X), delimiter=",")
    cfg = write(tmp_path, "gammas: [1, 1]\npsi: {variant: log_k, K: k.csv}\n"
                          "options: {T: 0.1, dt: 0.01}\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0


def test_unparseable_config(tmp_path, capsys):
    cfg = write(tmp_path, "gammas: [1, 2\nsurface: x\n")
    assert main(["check-gamma", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("text, field", [
    ("surface: {kind: klein}\n", "surface.kind"),
    ("gammas: [1, a]\n", "gammas"),
    ("options: {grad_tol: -1}\n", "options.grad_tol"),
    ("seeds: 3\n", "seeds"),
    ("threads: 0\n", "threads"),
])
def test_field_diagnostics(tmp_path, capsys, text, field):
    cfg = write(tmp_path, text)
    assert main(["check-gamma", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert f"'{field}'" in capsys.readouterr().err


def test_missing_grid_file(tmp_path):
    cfg = write(tmp_path, "surface: {kind: conformal_torus, u_grid: nope.npy}\n")
    assert main(["green-test", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "surface.u_grid" in report(tmp_path)["result"]["error"]


def test_round_trip():
    text = ("surface: {kind: flat_torus, lattice: [[1, 0], [0.3, 1.2]]}\n"
            "gammas: [1, 1, -1]\npsi: {variant: kirchhoff_routh, robin_sign: 1}\n"
            "options: {grid: 12, grad_tol: 1.0e-9, latitudes: [0.2, 0.5, 0.7]}\nseed: 4\nthreads: 2\n")
    cfg = RunConfig.parse(text)
    again = RunConfig.parse(cfg.dump())
    assert again == cfg
    assert yaml.safe_load(cfg.dump()) == cfg.to_mapping()


def test_tolerances_positive():
    with pytest.raises(ConfigError):
        RunConfig(options={"tol": 0})
    with pytest.raises(ConfigError):
        RunConfig(options={"flow": {"grad_tol": -1e-3}})


def test_deterministic_reports(tmp_path):
    cfg = write(tmp_path, "gammas: [1, 1, -1]\noptions: {grid: 8}\nseed: 5\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["find-equilibria", "--config", cfg, "--out", str(a)]) == 0
    assert main(["find-equilibria", "--config", cfg, "--out", str(b), "--threads", "2"]) == 0
    ra, rb = strip_time(a / "report.json"), strip_time(b / "report.json")
    rb["config"]["threads"] = ra["config"]["threads"]
    assert ra == rb
    assert (a / "sweeps.jsonl").read_bytes() == (b / "sweeps.jsonl").read_bytes()


def test_every_command_runs(tmp_path):
    cfg = RunConfig(surface={"kind": "round_sphere"}, gammas=[-3, 1, -3],
                    options={"points": classify_points(), "T": 0.05, "dt": 0.01})
    for cmd in COMMANDS:
        code = run(cmd, cfg, str(tmp_path / cmd))
        assert code in (0, 1, 2)
        assert report(tmp_path / cmd)["command"] == cmd


def classify_points():
    from vortexeq import classify_sphere_triple

    return classify_sphere_triple([-3, 1, -3]).solutions[0].points.tolist()
