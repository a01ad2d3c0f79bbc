"""Static report figures: net overlays, input bars, error maps, histograms.

Rendering is file-only (Agg backend, SVG output with the date metadata
suppressed so identical runs produce identical files).  The figure helpers
that prepare plot data are pure and unit-tested; drawing never feeds back
into any numerical result.
"""

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "cablenet"  # deterministic element ids

import matplotlib.pyplot as plt
import numpy as np

DEFAULT_DISPLACEMENT_SCALE = 5.0


def scaled_overlay(r_base, r_other, scale):
    """Coordinates of ``r_other`` with displacements from ``r_base`` scaled."""
    r_base = np.asarray(r_base, dtype=float)
    r_other = np.asarray(r_other, dtype=float)
    return r_base + scale * (r_other - r_base)


def edge_segments(cfg, net):
    """(m, 2, 2) array of top-view (x, y) endpoint pairs for all edges."""
    from .model import node_positions
    r = node_positions(cfg, net)
    return np.stack([r[net._s][:, :2], r[net._t][:, :2]], axis=1)


def input_bar_data(u, zero_threshold):
    """Indices of lengthened (u < 0) and shortened (u > 0) inputs."""
    u = np.asarray(u, dtype=float)
    lengthened = np.nonzero(u < -zero_threshold)[0]
    shortened = np.nonzero(u > zero_threshold)[0]
    return lengthened, shortened


def histogram_counts(per_node_err, bins=20, range_=None):
    """Bin counts of per-node errors; counts always sum to the node count."""
    counts, edges = np.histogram(np.asarray(per_node_err, dtype=float),
                                 bins=bins, range=range_)
    return counts, edges


def _draw_net(ax, cfg, net, color, label, lw=1.0):
    from matplotlib.collections import LineCollection
    segs = edge_segments(cfg, net)
    ax.add_collection(LineCollection(segs, colors=color, linewidths=lw,
                                     label=label))
    ax.plot(cfg[:, 0], cfg[:, 1], ".", color=color, ms=2)


def render_overview(scenario, r_initial, r_controlled, u, path,
                    scale=DEFAULT_DISPLACEMENT_SCALE, zero_threshold=1e-6):
    """Three-panel report figure: overlay, input bars, per-node error map.

    Displacements of the target and controlled nets relative to the initial
    one are exaggerated by ``scale`` for visibility.
    """
    net = scenario.net
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))

    ax = axes[0]
    _draw_net(ax, r_initial, net, "tab:blue", "initial")
    _draw_net(ax, scaled_overlay(r_initial, scenario.r_des, scale), net,
              "black", "target (scaled)")
    _draw_net(ax, scaled_overlay(r_initial, r_controlled, scale), net,
              "tab:green", "controlled (scaled)")
    ax.autoscale()
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"top view, displacements x{scale:g}")
    ax.legend(fontsize=7, loc="upper right")

    ax = axes[1]
    u = np.asarray(u, dtype=float)
    idx = np.arange(1, u.size + 1)
    lengthened, shortened = input_bar_data(u, zero_threshold)
    ax.bar(idx, u * 1e3, width=0.8, color="lightgray")
    if lengthened.size:
        ax.bar(idx[lengthened], u[lengthened] * 1e3, width=0.8,
               color="tab:red", label="lengthened")
    if shortened.size:
        ax.bar(idx[shortened], u[shortened] * 1e3, width=0.8,
               color="black", label="shortened")
    ax.set_xlabel("boundary edge number")
    ax.set_ylabel("input [mm]")
    ax.set_title("control inputs")
    if lengthened.size or shortened.size:
        ax.legend(fontsize=7)

    ax = axes[2]
    err = np.linalg.norm(scenario.r_des - r_controlled, axis=1)
    sc = ax.scatter(r_controlled[:, 0], r_controlled[:, 1], c=err * 1e3,
                    cmap="viridis", s=25)
    fig.colorbar(sc, ax=ax, label="error [mm]")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("per-node error")

    fig.tight_layout()
    _save(fig, path)


def render_error_histograms(scenario, r_initial, r_controlled, path, bins=20):
    """Before/after histograms of per-node distances to the target."""
    before = np.linalg.norm(scenario.r_des - r_initial, axis=1) * 1e3
    after = np.linalg.norm(scenario.r_des - r_controlled, axis=1) * 1e3
    hi = max(before.max(), after.max(), 1e-9)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.hist(before, bins=bins, range=(0.0, hi), alpha=0.55,
            color="tab:orange", label="before")
    ax.hist(after, bins=bins, range=(0.0, hi), alpha=0.55,
            color="tab:blue", label="after")
    ax.set_xlabel("deviation [mm]")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def _save(fig, path):
    path = str(path)
    if path.endswith(".svg"):
        fig.savefig(path, format="svg", metadata={"Date": None})
    else:
        fig.savefig(path)
    plt.close(fig)


def emit_plots(scenario, r_initial, r_controlled, u, plot_path=None,
               hist_path=None, scale=DEFAULT_DISPLACEMENT_SCALE,
               zero_threshold=1e-6):
    """Write the report figures; returns the list of written paths."""
    written = []
    if plot_path:
        render_overview(scenario, r_initial, r_controlled, u, plot_path,
                        scale, zero_threshold)
        written.append(str(plot_path))
    if hist_path:
        render_error_histograms(scenario, r_initial, r_controlled, hist_path)
        written.append(str(hist_path))
    return written
