import math
from pathlib import Path

import numpy as np
import pytest

from bmo_bandits import bandit_z, cli
from bmo_bandits.cube_stats import AlgoConfig
from bmo_bandits.dyadic import is_partition
from bmo_bandits.envs import builtin
from bmo_bandits.harness import (AGGREGATE_COLUMNS, ConfigError, RunConfig, aggregate, baseline_grid_ucb,
                                 baseline_random, grid_depth, parse_config, read_table, run_experiment)
from bmo_bandits.oracle import f_delta, regret_ledger
from bmo_bandits.trace import read_meta, read_trace, write_trace


def test_reference_z_setting():
    cfg = parse_config("--algo z --alpha 1 --eta 0.001 --eps 0.01 --T 2500 --env himmelblau".split())
    assert (cfg.algo, cfg.alpha, cfg.eta, cfg.eps, cfg.T) == ("z", 1.0, 0.001, 0.01, 2500)


def test_missing_env_names_flag():
    with pytest.raises(ConfigError, match="--env"):
        parse_config(["--algo", "p"])


def test_alpha_range_error_cites_formula():
    with pytest.raises(ConfigError, match=r"ln\(M_d/eta\)"):
        parse_config("--algo z --env log1d --alpha 1e6".split())


@pytest.mark.parametrize("argv,needle", [
    (["--env", "log1d", "--bogus", "1"], "--bogus"),
    (["--env", "log1d", "--T", "ten"], "--T"),
    (["--env", "log1d", "--eta", "2"], "eta"),
    (["--env", "mars"], "mars"),
    (["--env", "himmelblau", "--dim", "3"], "--dim"),
])
def test_config_errors(argv, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(argv)


def test_file_then_flags(tmp_path):
    f = tmp_path / "c.json"
    f.write_text('{\n  "env": "log2x",\n  "T": 77,\n  "delta": [0.1, 0.01]\n}\n')
    cfg = parse_config(["--config", str(f), "--T", "5"])
    assert cfg.env == "log2x" and cfg.T == 5 and cfg.deltas == (0.1, 0.01)
    f.write_text('{\n  "env": "log2x",\n  "eta": "big"\n}\n')
    with pytest.raises(ConfigError, match=r"c\.json:3"):
        parse_config(["--config", str(f)])
    f.write_text('{\n  "env": "log2x",\n  "colour": 1\n}\n')
    with pytest.raises(ConfigError, match=r"c\.json:3.*unknown key"):
        parse_config(["--config", str(f)])
    f.write_text('{"env": "log2x",,}')
    with pytest.raises(ConfigError, match=r"c\.json:1"):
        parse_config(["--config", str(f)])


def test_trace_round_trip(tmp_path):
    env = builtin("himmelblau", noise_bound=0.1)
    trace = bandit_z.run(AlgoConfig(T=20, eta=0.01, noise_bound=0.1), env, seed=1)
    path = write_trace(trace, tmp_path / "z.csv")
    back = read_trace(path)
    assert back.algo == "z" and back.dim == 2
    assert back.rows == trace.rows
    assert back.partition == trace.partition
    assert read_meta(path)["n_warm"] == trace.n_warmup


def test_baseline_random():
    env = builtin("log1d")
    cfg = AlgoConfig(T=2000, eta=0.001, noise_bound=0.0)
    tr = baseline_random(cfg, env, seed=0)
    k = grid_depth(0.001, 1)
    assert k == 10
    assert all(r.cube.depth == k and r.cube.contains(np.array(r.arms[0])) for r in tr.rows)
    assert is_partition([c for c, _, _ in tr.partition])
    # the surrogate cube mean averages to <f> = 0, so the mean gap is close to f_delta
    rep = f_delta(env, 0.1)
    led = regret_ledger(env, rep, tr)
    sd = np.std(led.gap)
    assert abs(led.gap.mean() - rep.f_delta) <= 4 * sd / math.sqrt(len(led.gap))
    again = baseline_random(cfg, env, seed=0)
    assert again.rows == tr.rows


def test_baseline_grid_ucb_never_refines():
    env = builtin("himmelblau")
    tr = baseline_grid_ucb(AlgoConfig(T=300, eta=0.01, noise_bound=0.1), env, seed=0)
    k = grid_depth(0.01, 2)
    assert {r.cube.depth for r in tr.rows} == {k}
    assert len(tr.partition) == 4**k


def _config(tmp_path, **kw):
    base = dict(algo="p", env="log2x", T=150, deltas=(0.1, 0.01), replications=3, out=str(tmp_path / "run"))
    base.update(kw)
    return RunConfig(**base)


def test_run_experiment_files_and_aggregate(tmp_path):
    cfg = _config(tmp_path)
    written = run_experiment(cfg)
    out = Path(cfg.out)
    assert len(written["traces"]) == 3
    for delta in ("0.1", "0.01"):
        header, cols, agg = read_table(out / f"aggregate_delta{delta}.csv")
        assert cols == AGGREGATE_COLUMNS
        assert header["replications"] == 3 and header["delta"] == float(delta)
        runs = [read_table(out / f"ledger_seed{s}_delta{delta}.csv")[2] for s in range(3)]
        assert cols[1] == "cum_delta_regret_mean"
        assert np.allclose(agg[:, 1], np.mean([r[:, 1] for r in runs], axis=0), rtol=0, atol=1e-12)
        assert np.allclose(agg[:, 2], np.std([r[:, 1] for r in runs], axis=0), rtol=0, atol=1e-12)
    ledger_cols = read_table(out / "ledger_seed0_delta0.1.csv")[1]
    assert ledger_cols[:6] == ["t", "cum_delta_regret", "cum_unclamped_gap", "cum_traditional_regret",
                               "n_cubes", "min_cube_measure"]
    report = (out / "report.csv").read_text().splitlines()
    assert report[0] == "checker,status,estimate,bound,margin"
    assert all(",pass," in line for line in report[1:])


def test_single_replication_sd_zero(tmp_path):
    cfg = _config(tmp_path, replications=1, deltas=(0.1,))
    run_experiment(cfg)
    _, cols, agg = read_table(Path(cfg.out) / "aggregate_delta0.1.csv")
    sd_cols = [i for i, c in enumerate(cols) if c.endswith("_sd")]
    assert np.all(np.nan_to_num(agg[:, sd_cols]) == 0)


def test_aggregate_mean_and_population_sd():
    a = np.array([[1, 1.0, 2.0, 0, 1, 1, 1]], dtype=float)
    b = np.array([[1, 3.0, 4.0, 0, 1, 1, 1]], dtype=float)
    row = aggregate([a, b])[0]
    assert row[1] == 2.0 and row[2] == 1.0


@pytest.mark.parametrize("algo", ["p", "z", "random-uniform", "grid-ucb"])
def test_rerun_byte_identical(tmp_path, algo):
    T = 40 if algo == "z" else 200
    one = _config(tmp_path / "a", algo=algo, T=T, replications=2, deltas=(0.1,))
    two = _config(tmp_path / "b", algo=algo, T=T, replications=2, deltas=(0.1,), jobs=2)
    run_experiment(one)
    run_experiment(two)
    for s in range(2):
        name = f"trace_seed{s}.csv"
        assert (Path(one.out) / name).read_bytes() == (Path(two.out) / name).read_bytes()


def test_cli_run_check_fdelta(tmp_path, capsys):
    out = tmp_path / "cli"
    code = cli.main(["run", "--algo", "p", "--env", "log1d", "--T", "100", "--out", str(out), "--delta", "0.1"])
    assert code == 0
    code = cli.main(["check", str(out / "trace_seed0.csv"), "--report", str(tmp_path / "r.csv")])
    assert code == 0
    printed = capsys.readouterr().out
    assert "point_scattering" in printed and "partition" in printed
    assert cli.main(["fdelta", "--env", "log2x", "--delta", "0.5", "0.01", "--raw"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("delta,f_delta")
    assert float(lines[2].split(",")[1]) == pytest.approx(2 * math.log(100), abs=1e-6)
    assert cli.main(["fdelta", "--env", "constant", "--delta", "0.3"]) == 1
    assert cli.main(["run", "--algo", "p"]) == 2
    assert "--env" in capsys.readouterr().err
