"""Deformation-vs-tick curves of every funnel run in traces/.

Each tracked channel is drawn with its target as a dashed line; the error
norm panel shows the success threshold. Usage: python3 plot_traces.py [dir]
"""
import csv
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent)
out = root / "plots"
out.mkdir(exist_ok=True)

for trace in sorted((root / "traces").glob("*.csv")):
    if trace.name.endswith(".target.csv"):
        continue
    targets = list(csv.DictReader(open(trace.with_suffix(".target.csv"))))
    ticks = [r for r in csv.DictReader(open(trace)) if r["event"] == "tick"]
    probes = [int(r["tick"]) for r in csv.DictReader(open(trace)) if r["event"] == "probe"]
    fig, (ax, ax_err) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    t = [int(r["tick"]) for r in ticks]
    for i, tg in enumerate(targets):
        line = ax.plot(t, [float(r[tg["column"]]) for r in ticks], label=tg["channel"])[0]
        ax.axhline(float(tg["target"]), color=line.get_color(), ls="--", lw=0.8)
    ax.set_ylabel("deformation")
    ax.legend(fontsize=6, ncol=2)
    ax_err.plot(t, [float(r["error_norm"]) for r in ticks], "k-")
    if targets:
        ax_err.axhline(float(targets[0]["threshold"]), color="k", ls=":", label="threshold")
    for p in probes:
        ax_err.axvline(p, color="tab:red", lw=0.5)
    ax_err.set_xlabel("tick")
    ax_err.set_ylabel("|e|")
    ax.set_title(trace.stem)
    fig.tight_layout()
    fig.savefig(out / f"{trace.stem}.png", dpi=100)
    plt.close(fig)
