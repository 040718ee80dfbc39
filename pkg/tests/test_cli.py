import numpy as np
import pytest

from hbnewton.cli import main
from hbnewton.errors import ConfigError, InsufficientTraceError
from hbnewton.experiment import (
    certificate_report,
    parse_config,
    parse_grid,
    rate_report,
    run_experiment,
)
from hbnewton.theory import find_epsilon, stepsize_bounds

BASE = """
graph.kind = regular
graph.n = 20
graph.d = 14
graph.seed = 1
data.m = 4000
data.p = 10
data.seed = 42
objective.lambda = 0.05
stopping.grad_tol = 1e-10
stopping.max_rounds = 300
"""


def cfg_text(tmp_path, algos, extra=""):
    return BASE + f"output_dir = {tmp_path / 'out'}\n" + extra + algos


HB_VS_GIANT = """
algorithm.hb.variant = newton_hb
algorithm.hb.alpha = 0.45
algorithm.hb.beta = 0.2
algorithm.giant.variant = newton
algorithm.giant.alpha = 0.3
"""


def test_parse_config_fields(tmp_path):
    cfg = parse_config(cfg_text(tmp_path, HB_VS_GIANT))
    assert cfg.graph.d == 14 and cfg.lam == 0.05 and cfg.max_rounds == 300
    assert [a.name for a in cfg.algorithms] == ["hb", "giant"]
    assert cfg.algorithms[0].config().beta == 0.2


@pytest.mark.parametrize("bad,field", [
    ("objective.lambda = 0\n", "objective.lambda"),
    ("stopping.grad_tol = -1\n", "stopping.grad_tol"),
    ("graph.kind = ring\n", "graph.kind"),
    ("graph.n = many\n", "graph.n"),
    ("nonsense.key = 1\n", "nonsense.key"),
])
def test_config_errors_name_the_field(tmp_path, bad, field):
    with pytest.raises(ConfigError) as info:
        parse_config(cfg_text(tmp_path, HB_VS_GIANT, bad))
    assert info.value.field == field


def test_config_needs_an_algorithm(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(cfg_text(tmp_path, ""))


def test_run_experiment_summary(tmp_path):
    summary = run_experiment(parse_config(cfg_text(tmp_path, HB_VS_GIANT, "stopping.gap_tol = 1e-8\n")))
    hb, giant = summary.row("hb"), summary.row("giant")
    assert hb.rounds_to_gap * 1.5 <= giant.rounds_to_gap
    out = tmp_path / "out"
    for name in ("trace_hb.csv", "trace_giant.csv", "summary.csv", "certificate.csv", "region.csv"):
        assert (out / name).exists()
    # summary rounds equal the first trace row meeting grad_tol
    for name, row in (("hb", hb), ("giant", giant)):
        lines = (out / f"trace_{name}.csv").read_text().splitlines()[1:]
        hits = [int(ln.split(",")[0]) for ln in lines if float(ln.split(",")[-1]) <= 1e-10]
        assert row.rounds_to_tol == (hits[0] if hits else 301)
    assert not summary.any_diverged


def test_zero_rounds_gives_sentinel(tmp_path):
    algo = "algorithm.only.variant = newton\nalgorithm.only.alpha = 0.3\n"
    text = cfg_text(tmp_path, algo).replace("stopping.max_rounds = 300", "stopping.max_rounds = 0")
    summary = run_experiment(parse_config(text))
    assert summary.row("only").rounds_to_tol == 1
    assert len((tmp_path / "out" / "trace_only.csv").read_text().splitlines()) == 2


def test_divergence_is_isolated_and_sets_exit_code(tmp_path, capsys):
    algos = HB_VS_GIANT + "algorithm.wild.variant = newton\nalgorithm.wild.alpha = 10\n"
    path = tmp_path / "c.cfg"
    path.write_text(cfg_text(tmp_path, algos))
    assert main(["run", str(path)]) == 1
    summary = (tmp_path / "out" / "summary.csv").read_text()
    assert ",diverged," in summary and summary.count(",diverged,") == 1


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("HBNEWTON_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    algo = "algorithm.only.variant = newton\nalgorithm.only.alpha = 0.3\n"
    run_experiment(parse_config(cfg_text(tmp_path, algo)))
    assert (tmp_path / "elsewhere" / "summary.csv").exists()
    assert not (tmp_path / "out").exists()


def test_certify_midpoint_and_table_values(desk):
    region = stepsize_bounds(find_epsilon(desk.constants))
    a = region.alpha_max / 2
    text, ok = certificate_report(desk.constants, a, region.beta_max(a) / 2)
    assert ok and "verdict: CERTIFIED" in text
    text, ok = certificate_report(desk.constants, min(find_epsilon(desk.constants).alpha_bounds()) / 2, 0.0)
    assert ok
    text, ok = certificate_report(desk.constants, 0.15, 0.5)
    assert not ok and "UNCERTIFIED" in text and "may still converge" in text


def test_certify_verb(tmp_path, capsys):
    path = tmp_path / "c.cfg"
    path.write_text(cfg_text(tmp_path, HB_VS_GIANT))
    assert main(["certify", str(path), "--alpha", "0.15", "--beta", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "eps_tilde" in out and "alpha bounds" in out and "rho(M" in out


def write_trace(path, norms):
    lines = ["round,consensus_err,tracking_err,opt_err,momentum_norm,f_value,grad_norm"]
    lines += [f"{t},{v:.17g},0,0,0,0,0" for t, v in enumerate(norms)]
    path.write_text("\n".join(lines) + "\n")


def test_rate_report_geometric(tmp_path, capsys):
    write_trace(tmp_path / "t.csv", 0.9 ** np.arange(120))
    rho, r2, burn = rate_report(tmp_path / "t.csv")
    assert abs(rho - 0.9) <= 1e-6 and burn == 20
    assert main(["rate", str(tmp_path / "t.csv")]) == 0
    assert "rho_hat = 0.9" in capsys.readouterr().out


def test_rate_report_noise_floor(tmp_path):
    write_trace(tmp_path / "t.csv", np.full(200, 3e-16))
    with pytest.raises(InsufficientTraceError):
        rate_report(tmp_path / "t.csv")
    assert main(["rate", str(tmp_path / "t.csv")]) == 2


def test_rate_report_on_real_run(tmp_path):
    algo = "algorithm.gt.variant = grad_track\nalgorithm.gt.alpha = 0.3\n"
    run_experiment(parse_config(cfg_text(tmp_path, algo)))
    rho, _, _ = rate_report(tmp_path / "out" / "trace_gt.csv")
    assert rho < 1


def test_sweep_verb(tmp_path, capsys):
    (tmp_path / "grid.txt").write_text("variant,alpha,beta\nnewton,0.3,0\nnewton_hb 0.15 0.5\n")
    path = tmp_path / "c.cfg"
    path.write_text(cfg_text(tmp_path, HB_VS_GIANT, "stopping.gap_tol = 1e-8\n"))
    assert main(["sweep", str(path), "--grid", str(tmp_path / "grid.txt")]) == 0
    rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3 and "best newton_hb" in capsys.readouterr().out


def test_parse_grid_errors():
    with pytest.raises(ConfigError):
        parse_grid("newton_hb\n")
    assert len(parse_grid("# header\nnewton 0.1\n")) == 1


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 2
