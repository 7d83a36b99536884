#!/usr/bin/env python3
"""Render plot-description JSON files (rtvcbf/1-plot) to PNG with matplotlib.

Usage: python scripts/render_plots.py out/study/plot_*.json
"""

import json
import sys
from pathlib import Path


def render(path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    doc = json.loads(path.read_text())
    fig, ax = plt.subplots(figsize=(7, 3.2))
    styles = ["-", ":", "--", "-."]
    for i, series in enumerate(doc["series"]):
        ax.plot(series["x"], series["y"], styles[i % len(styles)], label=series["label"])
    for circle in doc.get("circles", []):
        patch = plt.Circle(circle["center"], circle["radius"], fill=False, color="gray")
        ax.add_patch(patch)
        ax.annotate(circle["label"], circle["center"], color="gray", fontsize=8,
                    textcoords="offset points", xytext=(4, 4))
    for hline in doc.get("hlines", []):
        ax.axhline(hline["y"], color="gray", lw=0.8, ls="--")
    if doc.get("circles"):
        ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel(doc["x_label"])
    ax.set_ylabel(doc["y_label"])
    ax.set_title(doc["title"])
    ax.grid(True, ls=":", lw=0.5)
    ax.legend(loc="best", fontsize=8)
    out = path.with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=160)
    plt.close(fig)
    return out


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__)
        return 1
    for arg in sys.argv[1:]:
        out = render(Path(arg))
        print(f"rendered {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
