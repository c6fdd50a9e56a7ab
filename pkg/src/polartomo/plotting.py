"""Static figures written next to the CSV outputs.

SVGs are made byte-reproducible: fixed hash salt, no date metadata, text kept
as text rather than glyph paths.
"""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "svg.hashsalt": "polartomo",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "path.simplify": False,
}


def _render(fig):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "polartomo"})
    plt.close(fig)
    return buf.getvalue()


def plane_svg(points, frontier):
    """Tangle vs linear entropy scatter with the MEMS frontier drawn on top."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        _, s, t = frontier
        ax.fill_between(s, t, 1.05, color="0.92", lw=0)
        ax.plot(s, t, color="k", lw=1.2, label="MEMS")
        if points:
            ax.plot(
                [p.linear_entropy for p in points],
                [p.tangle for p in points],
                ".",
                ms=2.5,
                color="tab:blue",
                alpha=0.6,
                label=f"random states (n={len(points)})",
            )
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("linear entropy $S_L$")
        ax.set_ylabel("tangle $T$")
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        return _render(fig)


def poincare_svg(mesh, table, title=""):
    """Orthographic x-z and y-z projections of the input and output sphere meshes."""
    r_in = np.array([m[0] for m in mesh])
    r_out = np.array([m[1] for m in mesh])
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(6.4, 3.4))
        for ax, (i, name) in zip(axes, [(0, "x (D/A)"), (1, "y (R/L)")]):
            ax.plot(r_in[:, i], r_in[:, 2], ".", ms=1.5, color="0.7")
            ax.plot(r_out[:, i], r_out[:, 2], ".", ms=2.0, color="tab:red")
            for row in table:
                x, z = row.output_bloch[i], row.output_bloch[2]
                ax.plot([x], [z], "o", ms=4, color="k")
                ax.annotate(row.label, (x, z), xytext=(3, 3), textcoords="offset points", fontsize=7)
            ax.set_aspect("equal")
            ax.set_xlim(-1.1, 1.1)
            ax.set_ylim(-1.1, 1.1)
            ax.set_xlabel(name)
            ax.set_ylabel("z (H/V)")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _render(fig)
