import os
import sys

import matplotlib.pyplot as plt

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from formatter import read_csv  # noqa: E402


def plot_profile(path, show=False):
    """support radius quantiles over time from a simulate experiment's profile CSV"""
    rows = read_csv(path)
    times = [float(row["t"]) for row in rows]
    fig, ax = plt.subplots()
    for column in rows[0]:
        if column.startswith("q"):
            ax.plot(times, [float(row[column]) for row in rows], marker="o", label=column)
    ax.set_xlabel("t")
    ax.set_ylabel("max radius R_t")
    ax.legend()
    fig.savefig(path.replace(".csv", ".png"))
    if show:
        plt.show()
    return fig


def plot_probes(path, show=False):
    """probe values u(x0, t) along the ball or eps ladder of a classify-pde CSV"""
    rows = read_csv(path)
    key = "eps" if rows and "eps" in rows[0] and rows[0]["eps"] else "m"
    xs = [float(row[key]) for row in rows]
    fig, ax = plt.subplots()
    ax.plot(xs, [float(row["probe_u"]) for row in rows], marker="s")
    ax.set_xscale("log")
    ax.set_xlabel(key)
    ax.set_ylabel("probe value")
    ax.set_title(f"{rows[0]['name']}: {rows[0]['verdict']}")
    fig.savefig(path.replace(".csv", ".png"))
    if show:
        plt.show()
    return fig


if __name__ == '__main__':
    out = sys.argv[1] if len(sys.argv) > 1 else "./output"
    for name in sorted(os.listdir(out)):
        if name.endswith(".profile.csv"):
            plot_profile(os.path.join(out, name))
        elif name.endswith(".csv") and "probe_u" in open(os.path.join(out, name)).read():
            plot_probes(os.path.join(out, name))
