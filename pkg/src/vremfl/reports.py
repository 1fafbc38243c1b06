"""Delimited result artifacts and the figures rendered alongside them.

Every run writes plot-ready CSVs; the report path additionally renders the
convergence curve and resource-usage bars to image files next to them.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

METRICS_COLUMNS = ("t", "wall_start_s", "wall_end_s", "n_scheduled",
                   "n_delivered", "tx_slots", "gd_steps", "dist_sq")
BID_COLUMNS = ("round", "vehicle_id", "cost", "steps", "t_cpu", "tx_start",
               "t_tx", "feasible")


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_rows(metrics):
    for r in metrics.records:
        yield (r.round_t, r.wall_start_s, r.wall_end_s, r.n_scheduled,
               r.n_delivered, r.tx_slots, r.gd_steps, r.dist_sq)


def write_metrics_csv(metrics, path):
    """One row per round."""
    with open(path, "w") as f:
        f.write(",".join(METRICS_COLUMNS) + "\n")
        for row in metrics_rows(metrics):
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_bid_log(bid_log, path):
    """Audit trail: one row per (round, vehicle) bid."""
    with open(path, "w") as f:
        f.write(",".join(BID_COLUMNS) + "\n")
        for row in bid_log:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def summary_pairs(metrics):
    try:
        tx_rate = metrics.tx_rate
    except ValueError:
        tx_rate = float("nan")
    return (("rounds", len(metrics.records)),
            ("total_time_s", metrics.total_time_s),
            ("total_tx_slots", metrics.total_tx_slots),
            ("total_gd_steps", metrics.total_gd_steps),
            ("tx_rate", tx_rate),
            ("dist_sq_initial", metrics.dist_sq_initial),
            ("dist_sq_final", metrics.dist_sq_final))


def write_summary(metrics, path, header=None):
    """Aggregate key-value text block."""
    with open(path, "w") as f:
        if header:
            f.write(f"# {header}\n")
        for key, value in summary_pairs(metrics):
            f.write(f"{key} {_fmt(value)}\n")


def write_combined_csv(results, path, axis_name="policy"):
    """Aligned per-round series for a sweep: axis value x seed x round rows."""
    with open(path, "w") as f:
        f.write(f"{axis_name},seed," + ",".join(METRICS_COLUMNS) + "\n")
        for (label, seed), metrics in results.items():
            for row in metrics_rows(metrics):
                f.write(f"{label},{seed}," + ",".join(_fmt(v) for v in row) + "\n")


def write_combined_summary(results, path, axis_name="policy"):
    """One aggregate block per axis value, seeds listed per line."""
    labels = sorted({label for label, _ in results}, key=str)
    with open(path, "w") as f:
        for label in labels:
            f.write(f"[{axis_name} {label}]\n")
            seeds = sorted(seed for lab, seed in results if lab == label)
            for seed in seeds:
                m = results[(label, seed)]
                pairs = " ".join(f"{k}={_fmt(v)}" for k, v in summary_pairs(m))
                f.write(f"seed {seed}: {pairs}\n")
            f.write("\n")


# -------------------------------------------------------------------- plots

def fig_convergence(series, out_path, title=None):
    """Distance-to-optimum vs wall-clock time, one marker per round end."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    markers = ("^", "o", "D", "p", "s", "v")
    for k, (label, pts) in enumerate(sorted(series.items(), key=lambda kv: str(kv[0]))):
        pts = np.asarray(pts, dtype=float)
        if len(pts) == 0:
            continue
        ax.semilogy(pts[:, 0] / 60.0, pts[:, 1], linestyle="none",
                    marker=markers[k % len(markers)], markersize=4, label=str(label))
    ax.set_xlabel("Time (min)")
    ax.set_ylabel(r"$\|\theta_t - \theta^*\|^2$")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def fig_resources(totals, out_path, title=None):
    """Normalized tx-slot and GD-step usage, grouped per label."""
    labels = sorted(totals, key=str)
    tx = np.array([totals[k][0] for k in labels], dtype=float)
    gd = np.array([totals[k][1] for k in labels], dtype=float)
    tx_norm = tx / tx.max() if tx.max() > 0 else tx
    gd_norm = gd / gd.max() if gd.max() > 0 else gd
    x = np.arange(len(labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.bar(x - width / 2, tx_norm, width, label="tx slots")
    ax.bar(x + width / 2, gd_norm, width, label="GD steps")
    for xi, v in zip(x, tx_norm):
        ax.text(xi - width / 2, v, f"{v:.2f}", ha="center", va="bottom", fontsize=8)
    for xi, v in zip(x, gd_norm):
        ax.text(xi + width / 2, v, f"{v:.2f}", ha="center", va="bottom", fontsize=8)
    ax.set_xticks(x, [str(k) for k in labels])
    ax.set_ylabel("Normalized resource usage")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def convergence_series(metrics):
    """(wall_end_s, dist_sq) points for plotting one experiment."""
    return [(r.wall_end_s, r.dist_sq) for r in metrics.records]
