import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from offgpi import cli, harness
from offgpi.algos import AlgoConfig, ConfigError


def tiny(algo, **kw):
    base = dict(hidden_layers=(8, 8), random_action_steps=100, collection_steps=100, batch_size=16,
                eval_episodes=2, buffer_size=10_000)
    base.update(kw)
    return harness.build_config(algo, **base)


def fake_run(root, name, finals, env="lqr1d", steps=(1000, 2000)):
    """Run directory whose seeds end at the given final returns."""
    d = root / name
    d.mkdir()
    (d / "run.json").write_text(json.dumps({"algo": "td3", "env": env, "seeds": list(range(len(finals)))}))
    for k, f in enumerate(finals):
        sd = d / f"seed_{k}"
        sd.mkdir()
        rows = [harness.CURVE_HEADER] + [f"{s},{f - (len(steps) - 1 - i)},0.0,0.1," for i, s in enumerate(steps)]
        (sd / "curve.csv").write_text("\n".join(rows) + "\n")
    return d


@pytest.fixture(scope="module")
def td3_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "td3"
    arts = harness.run("td3", "lqr1d", [0, 1], 600, 200, out, tiny("td3"))
    return out, arts


@pytest.fixture(scope="module")
def sac_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "sac"
    harness.run("sac", "lqr1d", [0, 1, 2], 400, 200, out, tiny("sac"))
    return out


class TestRun:
    def test_layout_and_row_count(self, td3_run):
        out, arts = td3_run
        assert [a.seed for a in arts] == [0, 1]
        for a in arts:
            assert a.curve_path.exists() and a.summary_path.exists() and a.config_path.exists()
            lines = a.curve_path.read_text().splitlines()
            assert lines[0] == "step,eval_return_mean,eval_return_std,policy_sigma_mean,alpha"
            assert [int(l.split(",")[0]) for l in lines[1:]] == [200, 400, 600]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seeds"] == [0, 1] and np.isfinite(summary["final_return_mean"])

    def test_td3_columns(self, td3_run):
        cols = harness.read_curve(td3_run[0] / "seed_0" / "curve.csv")
        assert cols["policy_sigma_mean"] == [0.1, 0.1, 0.1]
        assert cols["alpha"] == [None, None, None]

    def test_curve_roundtrip_is_lossless(self, td3_run):
        path = td3_run[0] / "seed_1" / "curve.csv"
        cols = harness.read_curve(path)
        text = path.read_text()
        assert all(repr(v) in text for v in cols["eval_return_mean"])

    def test_rerun_is_byte_identical(self, td3_run, tmp_path):
        harness.run("td3", "lqr1d", [0, 1], 600, 200, tmp_path / "again", tiny("td3"))
        for s in (0, 1):
            assert (tmp_path / "again" / f"seed_{s}" / "curve.csv").read_bytes() == \
                   (td3_run[0] / f"seed_{s}" / "curve.csv").read_bytes()

    def test_replay_from_snapshot(self, td3_run):
        seed_dir = td3_run[0] / "seed_1"
        assert harness.replay_seed(seed_dir) == (seed_dir / "curve.csv").read_text()

    def test_sac_alpha_positive(self, sac_run):
        summary = json.loads((sac_run / "summary.json").read_text())
        assert len(summary["final_alpha"]) == 3 and all(a > 0 for a in summary["final_alpha"])
        cols = harness.read_curve(sac_run / "seed_0" / "curve.csv")
        assert all(a > 0 for a in cols["alpha"])

    def test_collision_needs_force(self, td3_run, tmp_path):
        out = tmp_path / "r"
        harness.run("ddpg", "lqr1d", [3], 200, 200, out, tiny("ddpg"))
        with pytest.raises(harness.RunError):
            harness.run("ddpg", "lqr1d", [3], 200, 200, out, tiny("ddpg"))
        harness.run("ddpg", "lqr1d", [4], 200, 200, out, tiny("ddpg"), force=True)
        assert [p.name for p in sorted(out.glob("seed_*"))] == ["seed_4"]

    def test_bad_inputs(self, tmp_path):
        with pytest.raises(harness.RunError):
            harness.run("td3", "lqr1d", [], 100, 100, tmp_path / "x")
        with pytest.raises(ValueError):
            harness.run("td3", "cartpole", [0], 100, 100, tmp_path / "y")

    def test_depth_and_hidden(self):
        assert harness.build_config("td3", depth=2, hidden=64).hidden_layers == (64, 64)
        assert harness.build_config("sac", hidden=32).hidden_layers == (32, 32, 32)

    def test_config_file(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("learning_rate = 1e-3\ngamma = 0.9\n")
        cfg = harness.build_config("tds", config_path=p)
        assert (cfg.learning_rate, cfg.gamma, cfg.algo) == (1e-3, 0.9, "tds")
        p.write_text("learning_rat = 1e-3\n")
        with pytest.raises(ConfigError):
            harness.build_config("tds", config_path=p)


class TestCompare:
    def test_self_comparison(self, tmp_path):
        d = fake_run(tmp_path, "a", [1.0, 2.0, 3.0])
        rep = harness.compare(d, d)
        assert rep.welch.t_statistic == 0.0 and rep.welch.p_value == pytest.approx(1.0)
        assert not rep.significant

    def test_hand_example(self, tmp_path):
        a = fake_run(tmp_path, "a", [2.0, 4.0, 6.0])
        b = fake_run(tmp_path, "b", [1.0, 2.0, 3.0])
        rep = harness.compare(a, b)
        assert rep.welch.t_statistic == pytest.approx(1.5492, abs=1e-4)
        assert rep.welch.degrees_of_freedom == pytest.approx(2.941, abs=1e-3)
        assert (rep.mean_a, rep.mean_b) == (4.0, 2.0)
        back = harness.compare(b, a)
        assert back.welch.t_statistic == -rep.welch.t_statistic and back.welch.p_value == rep.welch.p_value

    def test_significance_flag(self, tmp_path):
        a = fake_run(tmp_path, "a", [10.0, 10.1, 9.9, 10.05])
        b = fake_run(tmp_path, "b", [1.0, 1.1, 0.9, 1.05])
        rep = harness.compare(a, b)
        assert rep.significant and rep.welch.p_value < 0.05
        assert "significant at p < 0.05" in rep.to_text()

    def test_window_and_step(self, tmp_path):
        a = fake_run(tmp_path, "a", [2.0, 4.0, 6.0], steps=(1000, 2000, 3000))
        b = fake_run(tmp_path, "b", [1.0, 2.0, 3.0], steps=(1000, 2000, 3000))
        # the curves are final - 2, final - 1, final: shifting every seed equally keeps t
        assert harness.compare(a, b, window=3).welch.t_statistic == pytest.approx(1.5492, abs=1e-4)
        assert harness.compare(a, b, step=1000).mean_a == 2.0

    def test_errors(self, tmp_path):
        a = fake_run(tmp_path, "a", [1.0, 2.0])
        b = fake_run(tmp_path, "b", [1.0, 2.0], env="pendulum")
        c = fake_run(tmp_path, "c", [1.0])
        with pytest.raises(harness.RunError):
            harness.compare(a, b)
        with pytest.raises(harness.RunError):
            harness.compare(a, c)
        with pytest.raises(harness.RunError):
            harness.compare(a, tmp_path / "missing")


class TestPlot:
    def _paths(self, svg):
        root = ET.parse(svg).getroot()
        return root

    def test_single_seed_has_no_band(self, tmp_path):
        d = fake_run(tmp_path, "solo", [3.0])
        s = harness.plot([d], tmp_path / "p.svg")
        assert (s.n_lines, s.n_bands, s.labels) == (1, 0, ["solo"])
        ET.parse(s.path)  # well-formed XML

    def test_two_runs_two_bands(self, tmp_path):
        a = fake_run(tmp_path, "td3", [2.0, 4.0, 6.0])
        b = fake_run(tmp_path, "sac", [1.0, 2.0, 3.0])
        s = harness.plot([a, b], tmp_path / "p.svg")
        assert (s.n_lines, s.n_bands, s.labels) == (2, 2, ["td3", "sac"])
        text = s.path.read_text()
        assert ">td3<" in text and ">sac<" in text
        rows = harness.read_plot_data(s.path)
        assert ("td3", 2000, 4.0, 2.0, 3) in rows

    def test_deterministic_bytes(self, tmp_path):
        a = fake_run(tmp_path, "a", [2.0, 4.0])
        harness.plot([a], tmp_path / "p1.svg")
        harness.plot([a], tmp_path / "p2.svg")
        assert (tmp_path / "p1.svg").read_bytes() == (tmp_path / "p2.svg").read_bytes()

    def test_sigma_mode_td3_is_flat(self, td3_run, tmp_path):
        harness.plot([td3_run[0]], tmp_path / "s.svg", mode="sigma")
        rows = harness.read_plot_data(tmp_path / "s.svg")
        assert [r[2] for r in rows] == [0.1, 0.1, 0.1] and all(r[3] == 0.0 for r in rows)

    def test_errors(self, tmp_path):
        with pytest.raises(harness.RunError):
            harness.plot([], tmp_path / "x.svg")
        a = fake_run(tmp_path, "a", [1.0])
        b = fake_run(tmp_path, "b", [1.0], env="pendulum")
        with pytest.raises(harness.RunError):
            harness.plot([a, b], tmp_path / "x.svg")


class TestTaylorFromCheckpoint:
    def test_report(self, sac_run):
        rep = harness.taylor_from_checkpoint(sac_run / "seed_0", sigma=0.1, n_states=16, mc_samples=2000)
        assert rep.n_states == 16 and rep.sigma == 0.1
        assert math.isfinite(rep.measured_residual) and math.isfinite(rep.predicted_residual)
        data = json.loads(harness.report_json(rep))
        assert data["j_r"] == pytest.approx(data["j_d"] + data["measured_residual"])


class TestCli:
    def test_run_compare_plot_taylor(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("random_action_steps = 100\ncollection_steps = 100\nbatch_size = 16\neval_episodes = 2\n")
        common = ["--env", "lqr1d", "--seeds", "0,1", "--steps", "300", "--eval-every", "100",
                  "--depth", "2", "--hidden", "8", "--config", str(cfg)]
        assert cli.main(["run", "--algo", "td3", "--out", str(tmp_path / "td3"), *common]) == 0
        assert cli.main(["run", "--algo", "sac", "--out", str(tmp_path / "sac"), *common]) == 0
        assert len((tmp_path / "td3" / "seed_1" / "curve.csv").read_text().splitlines()) == 4
        assert AlgoConfig.load(tmp_path / "sac" / "seed_0" / "config.txt").hidden_layers == (8, 8)
        capsys.readouterr()

        assert cli.main(["compare", str(tmp_path / "td3"), str(tmp_path / "sac"), "--window", "2"]) == 0
        assert "p = " in capsys.readouterr().out
        assert cli.main(["plot", str(tmp_path / "td3"), str(tmp_path / "sac"), "--out",
                         str(tmp_path / "p.svg")]) == 0
        assert (tmp_path / "p.svg").exists()
        assert cli.main(["taylor", str(tmp_path / "sac" / "seed_0"), "--states", "8",
                         "--mc-samples", "800"]) == 0
        assert "predicted_residual" in capsys.readouterr().out

    def test_collision_exit_code(self, tmp_path, capsys):
        out = tmp_path / "r"
        out.mkdir()
        (out / "junk").write_text("x")
        args = ["run", "--algo", "td3", "--env", "lqr1d", "--steps", "10", "--out", str(out)]
        assert cli.main(args) == 2
        assert "--force" in capsys.readouterr().err

    def test_rejects_unknown_choices(self):
        with pytest.raises(SystemExit):
            cli.main(["run", "--algo", "ppo", "--env", "lqr1d", "--steps", "10", "--out", "x"])
        with pytest.raises(SystemExit):
            cli.main(["run", "--algo", "td3", "--env", "lqr1d", "--steps", "10", "--out", "x", "--depth", "4"])
