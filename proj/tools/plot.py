#!/usr/bin/env python3
"""Offline figures from the CSVs written by `vfharm_cli simulate` and `vfharm_cli epsilon`."""
import argparse
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def plot_simulation(d, out):
    tr = pd.read_csv(d / "trace.csv")
    sp = pd.read_csv(d / "spectra.csv")
    fig, ax = plt.subplots(4, 1, figsize=(8, 10), sharex=True)
    ax[0].plot(tr.t, tr.omega_m)
    ax[0].set_ylabel("omega_m [rad/s]")
    ax[1].plot(tr.t, tr[["i_a", "i_b", "i_c"]])
    ax[1].set_ylabel("i_abc [A]")
    ax[2].plot(tr.t, tr[["i_d", "i_q"]])
    ax[2].set_ylabel("i_dq [A]")
    for c in [c for c in sp.columns if c.startswith("i_a_")]:
        ax[3].semilogy(sp.t, sp[c].clip(lower=1e-12), label=c.removeprefix("i_a_"))
    ax[3].set_ylabel("|I_a,k|")
    ax[3].set_xlabel("t [s]")
    ax[3].legend(ncol=6, fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "simulation.png", dpi=120)
    if tr.V.notna().any():
        fig, ax = plt.subplots(figsize=(8, 3))
        ok = tr.V.notna()
        ax.semilogy(tr.t[ok], tr.V[ok], label="V")
        ax.semilogy(tr.t[ok], tr.L_max[ok], label="L_max")
        ax.legend()
        ax.set_xlabel("t [s]")
        fig.tight_layout()
        fig.savefig(out / "lyapunov.png", dpi=120)


def plot_epsilon(d, out):
    e = pd.read_csv(d / "epsilon.csv")
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(e.t, e.eps, label="eps")
    ax.plot(e.t, e.rate, label="omega_dot/omega")
    ax.legend()
    ax.set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(out / "epsilon.png", dpi=120)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dir", type=pathlib.Path, help="output directory of a CLI run")
    a = ap.parse_args()
    if (a.dir / "trace.csv").exists():
        plot_simulation(a.dir, a.dir)
    if (a.dir / "epsilon.csv").exists():
        plot_epsilon(a.dir, a.dir)


if __name__ == "__main__":
    main()
