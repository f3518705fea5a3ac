"""Deformation error and contact force during the slide, from slide.csv.

Usage: python3 plot_slide.py [dir] [band] [margin]
"""
import csv
import pathlib
import statistics
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent)
band = float(sys.argv[2]) if len(sys.argv) > 2 else 0.05
margin = float(sys.argv[3]) if len(sys.argv) > 3 else 1.0
rows = list(csv.DictReader(open(root / "slide.csv")))
(root / "plots").mkdir(exist_ok=True)
t = [int(r["tick"]) for r in rows]
force = [float(r["force_norm"]) for r in rows]
med = statistics.median(force)
fig, (a, b, c) = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
a.plot(t, [float(r["error_norm"]) for r in rows], "k-")
a.axhline(band, ls=":", color="k")
a.set_ylabel("|e|")
b.plot(t, [float(r["carrier_y"]) for r in rows])
b.set_ylabel("carrier height")
c.plot(t, force, "tab:blue")
for y in (med - margin, med, med + margin):
    c.axhline(y, ls="--" if y != med else "-", color="gray", lw=0.8)
c.set_ylabel("|contact force|")
c.set_xlabel("tick")
fig.tight_layout()
fig.savefig(root / "plots" / "slide.png", dpi=100)
