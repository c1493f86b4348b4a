"""Multi-seed experiment runs, Welch comparisons and SVG plots.

A run directory looks like::

    out/
      run.json          algo, env, seeds, steps, eval cadence
      summary.json      final return mean/std across seeds
      seed_0/
        curve.csv       step,eval_return_mean,eval_return_std,policy_sigma_mean,alpha
        summary.json
        config.txt      AlgoConfig snapshot (flat key = value)
        policy.ckpt, q1.ckpt, q2.ckpt
"""
from __future__ import annotations

import io
import json
import math
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import diffnet
from .algos import AlgoConfig, LearningCurve, Trainer
from .analysis import WelchResult, taylor_residual, welch_t_test
from .envs import make_env

CURVE_HEADER = "step,eval_return_mean,eval_return_std,policy_sigma_mean,alpha"
SIGNIFICANCE = 0.05


class RunError(RuntimeError):
    pass


@dataclass
class RunArtifact:
    curve_path: Path
    summary_path: Path
    config_path: Path
    seed: int
    variant: str
    env: str


# -- curves on disk -------------------------------------------------------------

def _num(x):
    return "" if x is None else repr(float(x))


def curve_to_csv(curve: LearningCurve) -> str:
    lines = [CURVE_HEADER]
    for row in zip(curve.steps, curve.eval_return_mean, curve.eval_return_std, curve.policy_sigma_mean, curve.alpha):
        lines.append(",".join([str(row[0])] + [_num(x) for x in row[1:]]))
    return "\n".join(lines) + "\n"


def read_curve(path):
    """Parse a curve CSV into column lists (``alpha`` entries may be ``None``)."""
    text = Path(path).read_text().splitlines()
    if not text or text[0] != CURVE_HEADER:
        raise RunError(f"{path}: unexpected curve header")
    cols = {k: [] for k in CURVE_HEADER.split(",")}
    for line in text[1:]:
        step, mean, std, sigma, alpha = line.split(",")
        cols["step"].append(int(step))
        cols["eval_return_mean"].append(float(mean))
        cols["eval_return_std"].append(float(std))
        cols["policy_sigma_mean"].append(float(sigma))
        cols["alpha"].append(float(alpha) if alpha else None)
    return cols


# -- run ----------------------------------------------------------------------------

def build_config(algo, config_path=None, depth=None, hidden=None, **overrides):
    base = AlgoConfig.load(config_path, algo=algo) if config_path else AlgoConfig(algo=algo)
    if depth is not None or hidden is not None:
        width = hidden if hidden is not None else base.hidden_layers[0]
        layers = depth if depth is not None else len(base.hidden_layers)
        base.hidden_layers = (int(width),) * int(layers)
    for key, value in overrides.items():
        setattr(base, key, value)
    return AlgoConfig.from_text(base.to_text())


def _train_seed(job):
    algo, env_name, cfg_text, seed, steps, eval_every, seed_dir = job
    cfg = AlgoConfig.from_text(cfg_text)
    trainer = Trainer(algo, cfg, make_env(env_name), seed)
    curve = trainer.run(steps, eval_every)
    seed_dir = Path(seed_dir)
    seed_dir.mkdir(parents=True, exist_ok=True)
    (seed_dir / "curve.csv").write_text(curve_to_csv(curve))
    (seed_dir / "config.txt").write_text(cfg_text)
    diffnet.save(trainer.policy.net, seed_dir / "policy.ckpt")
    diffnet.save(trainer.critic.q1, seed_dir / "q1.ckpt")
    diffnet.save(trainer.critic.q2, seed_dir / "q2.ckpt")
    summary = {
        "algo": algo, "env": env_name, "seed": seed, "steps": steps, "eval_every": eval_every,
        "final_return": curve.eval_return_mean[-1] if curve.steps else None,
        "final_policy_sigma": curve.policy_sigma_mean[-1] if curve.steps else None,
        "final_alpha": trainer.alpha if trainer.temperature is not None else None,
        "min_alpha": trainer.min_alpha if trainer.temperature is not None else None,
        "initial_policy_sigma": curve.initial_policy_sigma,
        "critic_updates": trainer.critic_updates, "actor_updates": trainer.actor_updates,
    }
    (seed_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def run(algo, env_name, seeds, steps, eval_every, out, config: AlgoConfig | None = None, force=False, workers=1):
    """Train one independent run per seed and write the run directory."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise RunError("need at least one seed")
    make_env(env_name)  # validates the name
    cfg = config if config is not None else AlgoConfig(algo=algo)
    if cfg.algo != algo:
        cfg = AlgoConfig.from_text(cfg.to_text(), algo=algo)
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise RunError(f"{out} already exists; pass force=True / --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_text = cfg.to_text()
    jobs = [(algo, env_name, cfg_text, s, int(steps), int(eval_every), str(out / f"seed_{s}")) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_train_seed, jobs))
    else:
        summaries = [_train_seed(j) for j in jobs]

    finals = [s["final_return"] for s in summaries if s["final_return"] is not None]
    meta = {"algo": algo, "env": env_name, "seeds": seeds, "steps": int(steps), "eval_every": int(eval_every)}
    (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n")
    top = dict(meta)
    top["final_return_mean"] = float(np.mean(finals)) if finals else None
    top["final_return_std"] = float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0
    alphas = [s["final_alpha"] for s in summaries if s["final_alpha"] is not None]
    top["final_alpha"] = alphas or None
    (out / "summary.json").write_text(json.dumps(top, indent=2) + "\n")
    return [RunArtifact(out / f"seed_{s}" / "curve.csv", out / f"seed_{s}" / "summary.json",
                        out / f"seed_{s}" / "config.txt", s, algo, env_name) for s in seeds]


def replay_seed(seed_dir):
    """Retrain a seed from its config snapshot and return the curve CSV text."""
    seed_dir = Path(seed_dir)
    summary = json.loads((seed_dir / "summary.json").read_text())
    cfg = AlgoConfig.load(seed_dir / "config.txt")
    trainer = Trainer(summary["algo"], cfg, make_env(summary["env"]), summary["seed"])
    return curve_to_csv(trainer.run(summary["steps"], summary["eval_every"]))


# -- compare --------------------------------------------------------------------------

def _seed_dirs(run_dir):
    dirs = sorted(Path(run_dir).glob("seed_*"), key=lambda p: int(p.name.split("_")[1]))
    if not dirs:
        raise RunError(f"{run_dir}: no seed_* directories")
    return dirs


def load_run(run_dir):
    run_dir = Path(run_dir)
    meta_path = run_dir / "run.json"
    if not meta_path.exists():
        raise RunError(f"{run_dir}: missing run.json")
    meta = json.loads(meta_path.read_text())
    curves = [read_curve(d / "curve.csv") for d in _seed_dirs(run_dir)]
    return meta, curves


def final_returns(curves, window=1, step=None):
    out = []
    for c in curves:
        vals = c["eval_return_mean"]
        if step is not None:
            vals = vals[:c["step"].index(step) + 1]
        if not vals:
            raise RunError("curve has no evaluation points")
        out.append(float(np.mean(vals[-window:])))
    return out


@dataclass
class ComparisonReport:
    env: str
    label_a: str
    label_b: str
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    welch: WelchResult
    significant: bool

    def to_text(self):
        w = self.welch
        flag = "significant" if self.significant else "not significant"
        return (f"{self.env}: {self.label_a} {self.mean_a:.3f} +/- {self.std_a:.3f} vs "
                f"{self.label_b} {self.mean_b:.3f} +/- {self.std_b:.3f}; t = {w.t_statistic:.4f}, "
                f"dof = {w.degrees_of_freedom:.3f}, p = {w.p_value:.4g} ({flag} at p < {SIGNIFICANCE})")


def compare(run_dir_a, run_dir_b, window=1, step=None) -> ComparisonReport:
    """Welch's t-test on final evaluation returns of two run directories."""
    meta_a, curves_a = load_run(run_dir_a)
    meta_b, curves_b = load_run(run_dir_b)
    if meta_a["env"] != meta_b["env"]:
        raise RunError(f"runs are on different environments: {meta_a['env']} vs {meta_b['env']}")
    fa = final_returns(curves_a, window, step)
    fb = final_returns(curves_b, window, step)
    if len(fa) < 2 or len(fb) < 2:
        raise RunError("each run needs at least 2 seeds for a t-test")
    w = welch_t_test(fa, fb)
    return ComparisonReport(meta_a["env"], Path(run_dir_a).name, Path(run_dir_b).name,
                            float(np.mean(fa)), float(np.std(fa, ddof=1)),
                            float(np.mean(fb)), float(np.std(fb, ddof=1)), w, w.p_value < SIGNIFICANCE)


# -- plot -------------------------------------------------------------------------------

@dataclass
class PlotSummary:
    path: Path
    labels: list
    n_lines: int
    n_bands: int


def plot(run_dirs, out_path, mode="return"):
    """Mean curve and +/-1 std band per run directory, written as SVG.

    ``mode="sigma"`` plots the policy standard deviation column instead of
    evaluation returns. The plotted numbers are embedded as an XML comment
    so the file diffs meaningfully.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not run_dirs:
        raise RunError("plot needs at least one run directory")
    column = {"return": "eval_return_mean", "sigma": "policy_sigma_mean"}[mode]
    runs = [(Path(d).name, *load_run(d)) for d in run_dirs]
    envs = {meta["env"] for _, meta, _ in runs}
    if len(envs) != 1:
        raise RunError(f"runs span several environments: {sorted(envs)}")

    table = io.StringIO()
    table.write(f"mode={mode} env={envs.pop()}\nlabel,step,mean,std,n_seeds\n")
    matplotlib.rcParams.update({"svg.hashsalt": "offgpi", "svg.fonttype": "none"})
    fig, ax = plt.subplots(figsize=(6, 4))
    n_lines = n_bands = 0
    labels = []
    for label, meta, curves in runs:
        n = min(len(c["step"]) for c in curves)
        if n == 0:
            raise RunError(f"{label}: empty curves")
        steps = np.array(curves[0]["step"][:n])
        ys = np.array([c[column][:n] for c in curves])
        mean = ys.mean(axis=0)
        std = ys.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros(n)
        ax.plot(steps, mean, label=label)
        n_lines += 1
        labels.append(label)
        if len(curves) > 1:
            ax.fill_between(steps, mean - std, mean + std, alpha=0.25)
            n_bands += 1
        for s, m, sd in zip(steps, mean, std):
            table.write(f"{label},{int(s)},{float(m)!r},{float(sd)!r},{len(curves)}\n")
    ax.set_xlabel("environment steps")
    ax.set_ylabel("evaluation return" if mode == "return" else "policy std")
    ax.legend()
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    svg = buf.getvalue()
    comment = "<!-- data\n" + table.getvalue().replace("--", "- -") + "-->\n"
    head, sep, rest = svg.partition("?>\n")
    svg = head + sep + comment + rest if sep else comment + svg
    out_path = Path(out_path)
    out_path.write_text(svg)
    return PlotSummary(out_path, labels, n_lines, n_bands)


def read_plot_data(svg_path):
    """Recover the embedded data table of a plot written by :func:`plot`."""
    text = Path(svg_path).read_text()
    start = text.index("<!-- data\n") + len("<!-- data\n")
    block = text[start:text.index("-->", start)].splitlines()
    rows = []
    for line in block[2:]:
        label, step, mean, std, n = line.split(",")
        rows.append((label, int(step), float(mean), float(std), int(n)))
    return rows


# -- taylor ---------------------------------------------------------------------------

def taylor_from_checkpoint(seed_dir, sigma=0.1, n_states=256, mc_samples=20_000, seed=0, eps=1e-3):
    """Second-order residual analysis on a checkpointed critic/actor pair.

    The critic is ``min(Q1, Q2)``; the actor mean is ``tanh`` of the policy
    output (for Gaussian heads, of the mean slice).
    """
    seed_dir = Path(seed_dir)
    summary = json.loads((seed_dir / "summary.json").read_text())
    policy_net = diffnet.load(seed_dir / "policy.ckpt")
    q1 = diffnet.load(seed_dir / "q1.ckpt")
    q2 = diffnet.load(seed_dir / "q2.ckpt")
    env = make_env(summary["env"])
    rng = np.random.default_rng(seed)
    states = np.array([env.reset(rng) for _ in range(n_states)])
    ad = env.action_dim

    def critic_fn(s, a):
        x = np.concatenate([s, a], axis=1)
        return np.minimum(q1(x)[:, 0], q2(x)[:, 0])

    def mu_fn(s):
        out = policy_net(s)
        return out if policy_net.output_size == ad else np.tanh(out[:, :ad])

    return taylor_residual(critic_fn, mu_fn, sigma, states, mc_samples, rng, eps=eps)


def report_json(obj):
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(type(o))

    data = asdict(obj)
    return json.dumps({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in data.items()},
                      indent=2, default=default)
