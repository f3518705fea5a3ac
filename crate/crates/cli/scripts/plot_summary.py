"""Ticks and probes per run from summary.csv. Usage: python3 plot_summary.py [dir]"""
import csv
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent)
rows = list(csv.DictReader(open(root / "summary.csv")))
(root / "plots").mkdir(exist_ok=True)
keys = [r["key"] for r in rows]
fig, (a, b) = plt.subplots(2, 1, figsize=(max(6, 0.5 * len(rows)), 6), sharex=True)
colors = ["tab:green" if r["success"] == "1" else "tab:red" for r in rows]
a.bar(keys, [int(r["ticks"]) for r in rows], color=colors)
a.set_ylabel("ticks")
b.bar(keys, [int(r["probes"]) for r in rows], color=colors)
b.set_ylabel("probes")
plt.setp(b.get_xticklabels(), rotation=60, ha="right", fontsize=7)
a.set_title(rows[0]["scenario"] if rows else "")
fig.tight_layout()
fig.savefig(root / "plots" / "summary.png", dpi=100)
