"""Log-log convergence plots as standalone SVG and gnuplot scripts."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

SERIES = (("l2", "L2 error", "#1f77b4"), ("h1", "H1 seminorm", "#d62728"),
          ("energy", "energy norm", "#2ca02c"))


def slope_label(report, name):
    """Finest-pair rate, rounded the way it is printed in the EOC column."""
    rates = [r for r in report.eoc(name) if not math.isnan(r)]
    return f"{rates[-1]:.2f}" if rates else "n/a"


def _series(report, name):
    return [(lv.h, getattr(lv, name)) for lv in report.levels
            if lv.ok and getattr(lv, name) is not None and getattr(lv, name) > 0]


def write_svg(report, path, title="convergence", width=640, height=480):
    pts = [p for name, _, _ in SERIES for p in _series(report, name)]
    margin = 70
    with open(path, "w") as fh:
        fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n')
        fh.write(f'<rect width="{width}" height="{height}" fill="white"/>\n')
        fh.write(f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>\n')
        if not pts:
            fh.write("</svg>\n")
            return
        lx = [math.log10(h) for h, _ in pts]
        ly = [math.log10(e) for _, e in pts]
        x0, x1 = min(lx) - 0.1, max(lx) + 0.1
        y0, y1 = min(ly) - 0.3, max(ly) + 0.3

        def sx(v):
            return margin + (math.log10(v) - x0) / (x1 - x0) * (width - 2 * margin)

        def sy(v):
            return height - margin - (math.log10(v) - y0) / (y1 - y0) * (height - 2 * margin)

        fh.write(f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
                 f'height="{height - 2 * margin}" fill="none" stroke="black"/>\n')
        for d in range(math.ceil(y0), math.floor(y1) + 1):
            y = sy(10.0**d)
            fh.write(f'<text x="{margin - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="11">1e{d}</text>\n')
        for lv in report.levels:
            if lv.ok:
                fh.write(f'<text x="{sx(lv.h):.1f}" y="{height - margin + 16}" text-anchor="middle" '
                         f'font-size="11">{lv.h:.3g}</text>\n')
        fh.write(f'<text x="{width / 2}" y="{height - 20}" text-anchor="middle" font-size="12">h</text>\n')
        for i, (name, label, color) in enumerate(SERIES):
            data = _series(report, name)
            if not data:
                continue
            path_d = " ".join(f"{'M' if j == 0 else 'L'}{sx(h):.1f},{sy(e):.1f}" for j, (h, e) in enumerate(data))
            fh.write(f'<path d="{path_d}" fill="none" stroke="{color}" stroke-width="2"/>\n')
            for h, e in data:
                fh.write(f'<circle cx="{sx(h):.1f}" cy="{sy(e):.1f}" r="3" fill="{color}"/>\n')
            fh.write(f'<text x="{margin + 10}" y="{margin + 18 + 16 * i}" font-size="12" fill="{color}">'
                     f'{escape(label)}: slope {slope_label(report, name)}</text>\n')
        fh.write("</svg>\n")


def write_gnuplot(report, path, title="convergence"):
    lines = [
        f'set title "{title}"',
        "set logscale xy",
        'set xlabel "h"',
        'set ylabel "error"',
        "set key left top",
        "set format y '%.0e'",
    ]
    plots = []
    blocks = []
    for name, label, _ in SERIES:
        data = _series(report, name)
        if not data:
            continue
        block = f"${name}"
        blocks.append(f"{block} << EOD")
        blocks.extend(f"{h!r} {e!r}" for h, e in data)
        blocks.append("EOD")
        plots.append(f'{block} using 1:2 with linespoints title "{label} (slope {slope_label(report, name)})"')
    with open(path, "w") as fh:
        fh.write("\n".join(blocks + lines) + "\n")
        if plots:
            fh.write("plot " + ", \\\n     ".join(plots) + "\n")
