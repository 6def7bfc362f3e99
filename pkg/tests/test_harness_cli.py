import json
import logging
import math
import subprocess
import sys

import numpy as np
import pytest

from vortexflow import harness
from vortexflow.cli import main
from vortexflow.errors import UsageError
from vortexflow.field import load_field
from vortexflow.kernels import DISK, VortexConfiguration

SMALL_PDE = """
experiment = pde_vs_ode
epsilons = 0.1
n_r = 64
n_theta = 64
dt_factor = 0.25
"""


def test_parse_config_defaults_and_echo():
    cfg = harness.parse_config("experiment = pde_vs_ode\nepsilons = 0.1, 0.05\n")
    assert cfg["epsilons"] == [0.1, 0.05]
    assert cfg["positions"] == [[0.3, 0.0], [-0.3, 0.0]]
    assert cfg["kinetic"] is True
    text = harness.echo_config(cfg)
    again = harness.parse_config("\n".join(l.split("#")[0] for l in text.splitlines()[1:]), "pde_vs_ode")
    assert again == cfg
    assert harness.config_hash(again) == harness.config_hash(cfg)


def test_parse_config_rejects_unknown_and_bad():
    with pytest.raises(UsageError):
        harness.parse_config("experiment = pde_vs_ode\nepsilon = 0.1\n")
    with pytest.raises(UsageError):
        harness.parse_config("experiment = nonsense\n")
    with pytest.raises(UsageError):
        harness.parse_config("experiment = pde_vs_ode\nn_r = many\n")


def test_ehrenfest_time():
    T = harness.ehrenfest_time(0.04, 0.1, 2)
    assert T == pytest.approx(math.sqrt(math.log(abs(math.log(0.04)))) * 0.01 / 2)
    assert harness.ehrenfest_time(0.04, 0.1, 2, tau0=1e-3) == 1e-3


def test_context_for_bc():
    assert harness.context_for_bc("dirichlet") is DISK
    assert harness.context_for_bc("neumann").kernel_kind == "dirichlet_green"
    with pytest.raises(UsageError):
        harness.context_for_bc("periodic")


def test_small_pde_experiment_is_deterministic(tmp_path):
    cfg = harness.parse_config(SMALL_PDE)
    a = harness.experiment_pde_vs_ode(cfg)
    b = harness.experiment_pde_vs_ode(cfg)
    assert harness.table_csv(a["rows"]) == harness.table_csv(b["rows"])
    row = a["rows"][0]
    assert row["energy_monotone"] and not row["flag"]
    assert row["sup_error"] < 2 * 0.1  # finite-eps lag is O(eps)
    paths = harness.write_outputs(tmp_path, "pde_vs_ode", a)
    names = sorted(p.name for p in paths)
    assert names == ["config.resolved.txt", "pde_vs_ode.csv", "pde_vs_ode.json", "pde_vs_ode_profile.csv"]


def test_centered_vortex_tracking_error_below_one_cell():
    cfg = harness.parse_config("experiment = pde_vs_ode\nepsilons = 0.04\npositions = 0,0\ndegrees = 1\n"
                               "n_r = 128\nn_theta = 128\nt_end = 0.02\nkinetic = no\n")
    row = harness.experiment_pde_vs_ode(cfg)["rows"][0]
    assert row["sup_error"] / math.pi <= row["cell"]


def test_neumann_pair_exits_before_dirichlet_pair():
    logging.disable(logging.WARNING)
    try:
        base = "experiment = pde_vs_ode\nepsilons = 0.08\nn_r = 128\nn_theta = 128\nt_end = 0.3\n" \
               "kinetic = no\nn_probes = 31\nrho_stop = 0.02\n"
        neu = harness.experiment_pde_vs_ode(harness.parse_config(base + "bc = neumann\n"))["rows"][0]
        dir_ = harness.experiment_pde_vs_ode(harness.parse_config(base + "bc = dirichlet\n"))["rows"][0]
    finally:
        logging.disable(logging.NOTSET)
    assert neu["exit_time"] is not None
    assert dir_["exit_time"] is None or dir_["exit_time"] > neu["exit_time"]


def test_mr_fit_recovers_planted_law():
    rows = []
    for n in (16, 64, 256):
        for k in (3, 4, 5, 6, 7):
            r = 2.0**-k
            rows.append((r, n, 0.7 / math.sqrt(abs(math.log(r))) + 1.3 / math.sqrt(n)))
    fit = harness.mr_fit(rows)
    assert fit["A"] == pytest.approx(0.7) and fit["B"] == pytest.approx(1.3)
    assert fit["r2"] == pytest.approx(1.0)


def test_meanfield_n1_self_consistency():
    cfg = harness.parse_config("experiment = ode_vs_meanfield\nn_list = 1\n", "ode_vs_meanfield")
    # one vortex is not placed by the square rule on the disk; the ODE and particle runs still agree
    from vortexflow.mean_field import empirical_measure, run_particles
    from vortexflow.point_vortex import integrate, rescale_to_meanfield_time
    vc = VortexConfiguration.plus([[0.25, -0.1]])
    ode = rescale_to_meanfield_time(integrate(DISK, vc, cfg["t_bar"], cfg["rho_stop"], rtol=1e-12, atol=1e-13))
    snaps = run_particles(DISK, empirical_measure(vc), cfg["t_bar"], 1e-3, probes=[cfg["t_bar"]])
    assert np.allclose(snaps[-1][1].positions, ode.positions_at(cfg["t_bar"]), atol=1e-9)


def test_validate_passes_and_detects_injected_bias():
    ok = harness.validate_all(n_r=64, n_random=20)
    assert ok["passed"], ok["failed"]
    bad = harness.validate_all(n_r=64, kernel_bias=1e-3, n_random=20)
    assert bad["failed"] == ["gradient_consistency"]
    with pytest.raises(UsageError):
        harness.validate_all(n_r=100)


def test_biased_W_matches_explicit_sum():
    cfg = VortexConfiguration([[0.3, 0.1], [-0.2, 0.2]], [1, -1])
    b = 1e-3
    s = np.abs(cfg.z) ** 2
    d = cfg.degrees
    extra = -np.pi * b * sum(d[j] * d[k] * (s[j] + s[k]) for j in range(2) for k in range(2))
    assert harness.biased_W(DISK, cfg, b) - harness.biased_W(DISK, cfg, 0.0) == pytest.approx(extra)


# -- command line ---------------------------------------------------------------------

def test_cli_kernel_table(tmp_path, capsys):
    (tmp_path / "k.cfg").write_text("points_per_axis = 3\nextent = 0.5\n")
    assert main(["kernel", "table", "--config", str(tmp_path / "k.cfg"), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "kernel_table.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,y1,y2,N,H,G"
    assert len(lines) == 1 + 9 * 8


def test_cli_pvortex_stdout(tmp_path, capsys):
    (tmp_path / "p.cfg").write_text("positions = 0.5,0\ndegrees = 1\nt_end = 0.1\nn_probes = 11\n")
    assert main(["pvortex", "run", "--config", str(tmp_path / "p.cfg")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("t,a_1x,a_1y,W")
    r = math.hypot(*map(float, out[-1].split(",")[1:3]))
    assert r == pytest.approx(0.39, abs=1e-3)


def test_cli_mkdata_tdgl_and_diag(tmp_path, capsys):
    (tmp_path / "m.cfg").write_text("n = 16\nepsilon = 0.1\nn_r = 64\nn_theta = 64\n")
    assert main(["mkdata", "--config", str(tmp_path / "m.cfg"), "--out", str(tmp_path / "m")]) == 0
    info = json.loads((tmp_path / "m" / "mkdata.json").read_text())
    assert info["n_placed"] == 16
    (tmp_path / "t.cfg").write_text("epsilon = 0.1\ndt = 1e-3\nt_end = 0.01\nn_r = 64\nn_theta = 64\n")
    assert main(["tdgl", "run", "--config", str(tmp_path / "t.cfg"), "--out", str(tmp_path / "t")]) == 0
    summary = json.loads((tmp_path / "t" / "summary.json").read_text())
    assert summary["monotone"] and summary["snapshots"] == 3
    snap = tmp_path / "t" / "snapshot_002.vxf"
    assert load_field(snap).time == pytest.approx(0.01)
    capsys.readouterr()
    assert main(["diag", "track", str(snap)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["degrees"] == [1, 1]
    assert main(["diag", "excess", str(snap), "--positions", "0.3,0;-0.3,0", "--degrees", "1,1"]) == 0
    assert main(["diag", "eta", str(snap), "--positions", "0.3,0;-0.3,0", "--rho-star", "0.1"]) == 0
    assert main(["diag", "equip", str(snap), "--center", "0.3,0", "--sigma", "0.2"]) == 0
    assert main(["diag", "hodge", str(snap), "--positions", "0.3,0;-0.3,0", "--degrees", "1,1"]) == 0


def test_cli_dist(tmp_path, capsys):
    (tmp_path / "a.csv").write_text("x,y,w\n0.2,0,3.141592653589793\n-0.2,0,3.141592653589793\n")
    (tmp_path / "b.csv").write_text("x,y,w\n0.25,0,3.141592653589793\n-0.25,0,3.141592653589793\n")
    assert main(["diag", "dist", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["distance"] == pytest.approx(0.1 * math.pi)


def test_cli_validate_exit_codes(tmp_path, capsys):
    (tmp_path / "v.cfg").write_text("n_random = 10\n")
    assert main(["validate", "--config", str(tmp_path / "v.cfg"), "--n-r", "64"]) == 0
    assert main(["validate", "--config", str(tmp_path / "v.cfg"), "--n-r", "64", "--kernel-bias", "1e-3"]) == 1


def test_cli_experiment_and_errors(tmp_path, capsys):
    (tmp_path / "e.cfg").write_text(SMALL_PDE)
    assert main(["experiment", "--config", str(tmp_path / "e.cfg"), "--out", str(tmp_path / "o")]) == 0
    first = (tmp_path / "o" / "pde_vs_ode.csv").read_bytes()
    assert main(["experiment", "--config", str(tmp_path / "e.cfg"), "--out", str(tmp_path / "o2")]) == 0
    assert (tmp_path / "o2" / "pde_vs_ode.csv").read_bytes() == first
    (tmp_path / "bad.cfg").write_text("experiment = pde_vs_ode\nbogus = 1\n")
    assert main(["experiment", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "x")]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "vortexflow", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "validate" in out.stdout
