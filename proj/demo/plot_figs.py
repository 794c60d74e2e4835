"""Render the CSV bundles written by `simkit fig` as PNGs.

    simkit fig --which 1 --out-dir figs/f1   (likewise 2 and 3)
    python3 demo/plot_figs.py figs
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def rpv_dependence(d: Path, out: Path):
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    orc, q = pd.read_csv(d / "oracle.csv"), pd.read_csv(d / "qssa.csv")
    a.plot(orc.z1, orc.z2, "k-", label="oracle-sim")
    a.plot(q.z1, q.z2, "C1--", label="qssa")
    a.set(xlabel="z1", ylabel="z2", title="original coordinates")
    for name, style, label in [
        ("oracle_rotated.csv", "k-", "oracle (mapped)"),
        ("qssa_rotated_mapped.csv", "C1--", "qssa, then mapped"),
        ("qssa_rotated_native.csv", "C2:", "qssa in rotated frame"),
    ]:
        t = pd.read_csv(d / name)
        b.plot(t.w1, t.w2, style, label=label)
    b.set(xlabel="w1", ylabel="w2", title="rotated coordinates")
    for ax in (a, b):
        ax.legend()
    fig.tight_layout()
    fig.savefig(out / "fig1_rpv_dependence.png", dpi=120)


def trajectories(d: Path, out: Path):
    fig, ax = plt.subplots(figsize=(5, 4))
    for _, g in pd.read_csv(d / "trajectories.csv").groupby("id"):
        ax.plot(g.z1, g.z2, color="0.6", lw=0.8)
    s = pd.read_csv(d / "sim.csv")
    ax.plot(s.z1, s.z2, "k-", lw=2, label="slow manifold")
    ax.set(xlabel="z1", ylabel="z2")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "fig2_trajectories.png", dpi=120)


def extended(d: Path, out: Path):
    e = pd.read_csv(d / "extended.csv")
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    p = ax.scatter(e.z1, e.t, e.z2, c=e.K, cmap="coolwarm", s=2)
    ax.set(xlabel="z1", ylabel="t", zlabel="z2")
    fig.colorbar(p, label="K")
    fig.tight_layout()
    fig.savefig(out / "fig3_extended.png", dpi=120)


def main():
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "figs")
    for sub, fn in [("f1", rpv_dependence), ("f2", trajectories), ("f3", extended)]:
        if (root / sub).is_dir():
            fn(root / sub, root)
            print(f"wrote {sub}")


if __name__ == "__main__":
    main()
