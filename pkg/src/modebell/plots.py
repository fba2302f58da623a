"""Matplotlib figures written next to the CSV outputs. Agg backend only."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_SAVE_KW = dict(dpi=150, bbox_inches="tight", metadata={"Software": None})


def save_fringe_figure(path, angles, correlations, b_angle, s_value) -> None:
    """Correlation fringe E(a, b) against the local analyzer angle a."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(angles, correlations, color="tab:blue", lw=1.8)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("site-1 angle a (rad)")
    ax.set_ylabel(f"E(a, b={b_angle:.3f})")
    ax.set_title(f"Correlation fringe (S = {s_value:.4f})")
    ax.set_xlim(angles[0], angles[-1])
    ax.set_ylim(-1.05, 1.05)
    ax.grid(alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_correlator_figure(path, estimate: dict) -> None:
    """Bar chart of the four CHSH correlators and the resulting S."""
    labels = ["E(a,b)", "E(a,b')", "E(a',b)", "E(a',b')"]
    values = [estimate["e_ab"], estimate["e_abp"], estimate["e_apb"], estimate["e_apbp"]]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar(labels, values, color="tab:blue", width=0.6)
    ax.axhline(0.0, color="0.4", lw=0.8)
    ax.set_ylim(-1.05, 1.05)
    ax.set_ylabel("correlator")
    ax.set_title(f"S = {estimate['s_value']:.4f} (shots = {estimate['shots']})")
    ax.grid(alpha=0.3, axis="y")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_reference_sweep_figure(path, nbars, s_values, threshold) -> None:
    """Optimal CHSH value against the reference-trap mean occupation."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(nbars, s_values, "o-", color="tab:blue", lw=1.8)
    ax.axhline(2.0, color="tab:red", lw=1.0, ls="--", label="classical bound 2")
    ax.axhline(2.0 * math.sqrt(2.0), color="0.4", lw=1.0, ls=":", label="Tsirelson 2sqrt(2)")
    if threshold is not None:
        ax.axvline(threshold, color="tab:green", lw=1.0, ls="-.",
                   label=f"violation from nbar={threshold:g}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("reference mean occupation nbar")
    ax.set_ylabel("optimal S")
    ax.set_title("Bell violation vs reference-frame size")
    ax.legend(loc="lower right", fontsize=9)
    ax.grid(alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_tps_figure(path, labels, entropies, residuals) -> None:
    """Structure-relative entropies plus factorization residuals."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    ax1.bar(labels, entropies, color="tab:blue", width=0.6)
    ax1.set_ylabel("entanglement entropy (bits)")
    ax1.set_title("Same states, different structures")
    ax1.tick_params(axis="x", rotation=20)
    ax1.grid(alpha=0.3, axis="y")
    if residuals:
        ax2.semilogy(range(len(residuals)), [max(r, 1e-18) for r in residuals], "o",
                     color="tab:blue", ms=4)
    ax2.axhline(1e-8, color="tab:red", lw=1.0, ls="--", label="rank-1 tolerance")
    ax2.set_xlabel("random state index")
    ax2.set_ylabel("second Schmidt coefficient")
    ax2.set_title("Factorizing structure residuals")
    ax2.legend(fontsize=9)
    ax2.grid(alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_oscillator_figure(path, ratios, numeric, analytic, normal_mode) -> None:
    """Ground-state entanglement against the coupling ratio."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(ratios, numeric, "o", color="tab:blue", label="truncated numerics")
    ax.plot(ratios, analytic, "-", color="tab:orange", lw=1.5, label="Gaussian closed form")
    ax.plot(ratios, normal_mode, "s--", color="0.5", ms=4, lw=1.0,
            label="normal-mode bipartition")
    ax.set_xlabel("coupling ratio k / (m w^2)")
    ax.set_ylabel("entropy (bits)")
    ax.set_title("Coupled-oscillator ground-state entanglement")
    ax.legend(fontsize=9)
    ax.grid(alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
