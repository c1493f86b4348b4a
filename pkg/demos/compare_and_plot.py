"""
Comparing algorithms across seeds
=================================

The harness trains one run per seed, writes curves to disk, compares final
returns with Welch's t-test and draws a mean +/- std plot. The same steps
are available from the command line as ``offgpi run``, ``offgpi compare``
and ``offgpi plot``.
"""
import tempfile
from pathlib import Path

from offgpi import harness

out = Path(tempfile.mkdtemp(prefix="offgpi-demo-"))
for algo in ("td3", "sac"):
    cfg = harness.build_config(algo, depth=2, hidden=32, random_action_steps=500, collection_steps=500)
    harness.run(algo, "pendulum", [0, 1, 2], 6000, 1000, out / algo, cfg)
    print(algo, (out / algo / "summary.json").read_text())

report = harness.compare(out / "td3", out / "sac")
print(report.to_text())

summary = harness.plot([out / "td3", out / "sac"], out / "returns.svg")
harness.plot([out / "td3", out / "sac"], out / "sigma.svg", mode="sigma")
print(f"plots in {out}: {summary.n_lines} curves, {summary.n_bands} bands")

# The plotted numbers ride along inside the SVG, so a plot can be diffed or re-read.
for row in harness.read_plot_data(out / "returns.svg")[:3]:
    print(row)
