"""Log-log figures of mean estimation error against sample size."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runner import RateReport  # noqa: E402

PANEL_METRICS = ("err_lambda", "err_a", "err_b", "err_nu", "hellinger")
LABELS = {
    "err_lambda": r"$|\hat\lambda_n-\lambda^*|$",
    "err_a": r"$\|\hat a_n-a^*\|$",
    "err_b": r"$|\hat b_n-b^*|$",
    "err_nu": r"$|\hat\nu_n-\nu^*|$",
    "hellinger": r"$h(p_{\hat\lambda,\hat G}, p_{\lambda^*,G_*})$",
}

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    # keep text as text so the slope annotations stay searchable
    "svg.fonttype": "none",
    "svg.hashsalt": "moe-lab",
}


def panel_metrics(report: RateReport, metrics=None):
    if metrics is not None:
        return [m for m in metrics if report.slopes.get(m) is not None]
    chosen = [m for m in PANEL_METRICS if report.slopes.get(m) is not None]
    if not chosen:
        chosen = [m for m, fit in report.slopes.items() if fit is not None]
    return chosen


def rate_figure(report: RateReport, metrics=None):
    metrics = panel_metrics(report, metrics)
    with plt.rc_context(STYLE):
        ncols = max(1, len(metrics))
        fig, axes = plt.subplots(1, ncols, figsize=(2.6 * ncols, 2.6), squeeze=False)
        for ax, m in zip(axes[0], metrics):
            ns = np.array([s.n for s in report.per_n], dtype=float)
            mean = np.array([s.mean[m] for s in report.per_n])
            se = np.array([s.stderr[m] for s in report.per_n])
            fit = report.slopes[m]
            ok = mean > 0
            if np.all(np.isfinite(se)):
                ax.errorbar(ns[ok], mean[ok], yerr=np.minimum(se[ok], 0.999 * mean[ok]),
                            fmt="o-", color="tab:blue", ms=3, lw=1, capsize=2)
            else:
                ax.plot(ns[ok], mean[ok], "o-", color="tab:blue", ms=3, lw=1)
            xs = np.geomspace(ns.min(), ns.max(), 50)
            ax.plot(xs, np.exp(fit.intercept) * xs**fit.slope, "-.", color="tab:red", lw=1)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel("$n$")
            ax.set_title(LABELS.get(m, m))
            ax.text(0.04, 0.06, f"slope = {fit.slope:.2f}", transform=ax.transAxes, color="tab:red")
        fig.suptitle(f"{report.scenario} / {report.case}", fontsize=9)
        fig.tight_layout()
    return fig


def emit_svg(report: RateReport, path, metrics=None) -> None:
    fig = rate_figure(report, metrics)
    try:
        with plt.rc_context(STYLE):
            fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)


def emit_png(report: RateReport, path, metrics=None, dpi=150) -> None:
    fig = rate_figure(report, metrics)
    try:
        fig.savefig(path, dpi=dpi)
    finally:
        plt.close(fig)


__all__ = ["emit_png", "emit_svg", "panel_metrics", "rate_figure"]
