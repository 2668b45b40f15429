#!/usr/bin/env python3
"""Plots the artifacts written by `saop run` and `saop multirun`.

    python3 scripts/plot_saop.py out/lti            # a run directory
    python3 scripts/plot_saop.py out/lti_multi      # a multirun directory

Figures are written next to the CSV files as PNG.
"""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def plot_convergence(run_dir):
    data = read_csv(run_dir / "convergence.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(data["k"], data["mean_J"], marker="o", label="J at mean")
    ax.plot(data["k"], data["best_J"], marker=".", label="best sample")
    ax.plot(data["k"], data["gamma"], linestyle="--", label="threshold")
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(run_dir / "convergence.png", dpi=120)
    plt.close(fig)


def plot_mu_trace(run_dir):
    data = read_csv(run_dir / "mu_trace.csv")
    names = [n for n in data.dtype.names if n != "k"]
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in names[:12]:
        ax.plot(data["k"], data[name], label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean weight")
    if len(names) <= 12:
        ax.legend(ncol=2, fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(run_dir / "mu_trace.png", dpi=120)
    plt.close(fig)


def plot_trajectory(run_dir):
    path = run_dir / "trajectory.csv"
    if not path.exists():
        return
    data = read_csv(path)
    problem = ""
    result = run_dir / "result.json"
    if result.exists():
        problem = json.loads(result.read_text()).get("config", {}).get("problem", {}).get("name", "")
    fig, ax = plt.subplots(figsize=(5, 5) if problem == "dubins_car" else (6, 4))
    if problem == "dubins_car":
        ax.plot(data["x1"], data["x2"])
        ax.add_patch(plt.Rectangle((8, 8), 6, 6, color="grey", alpha=0.5))
        ax.plot([20], [20], marker="*", markersize=12)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_aspect("equal")
    else:
        for name in data.dtype.names[1:]:
            ax.plot(data["t"], data[name], label=name)
        ax.set_xlabel("t")
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(run_dir / "trajectory.png", dpi=120)
    plt.close(fig)


def plot_histogram(multi_dir):
    data = read_csv(multi_dir / "histogram.csv")
    data = np.atleast_1d(data)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(data["bin_lower"], data["count"], width=data["bin_upper"] - data["bin_lower"], align="edge",
           edgecolor="black")
    ax.set_xlabel("final cost")
    ax.set_ylabel("runs")
    fig.tight_layout()
    fig.savefig(multi_dir / "histogram.png", dpi=120)
    plt.close(fig)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("directory", type=Path)
    args = parser.parse_args()
    directory = args.directory
    if (directory / "histogram.csv").exists():
        plot_histogram(directory)
        for run_dir in sorted(directory.glob("run_*")):
            if (run_dir / "convergence.csv").exists():
                plot_convergence(run_dir)
    elif (directory / "convergence.csv").exists():
        plot_convergence(directory)
        plot_mu_trace(directory)
        plot_trajectory(directory)
    else:
        parser.error(f"{directory} holds neither a run nor a multirun")


if __name__ == "__main__":
    main()
