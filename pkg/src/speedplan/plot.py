"""Deterministic SVG rendering of a planned profile.

The output depends only on the input numbers: fixed canvas, fixed tick
rule (``nice_ticks``), fixed number formatting and no timestamps or random
ids, so identical profiles produce byte-identical files.
"""

import math

import numpy as np

WIDTH, HEIGHT = 800, 450
LEFT, RIGHT, TOP, BOTTOM = 70, 80, 40, 60

SERIES = (
    # key, label, color, dash, axis
    ("v", "v (m/s)", "#1f77b4", "", "left"),
    ("lower", "sqrt(2 l) (m/s)", "#2ca02c", "6 3", "left"),
    ("upper", "sqrt(2 u) (m/s)", "#d62728", "6 3", "left"),
    ("f", "f (m/s^2)", "#7f7f7f", "2 2", "right"),
)


def nice_ticks(lo, hi, target=5):
    """Ticks at multiples of 1, 2 or 5 x 10^k covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("non-finite axis range")
    if hi <= lo:
        pad = max(abs(lo), 1.0) * 0.5
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.floor(lo / step + 1e-9) * step
    stop = math.ceil(hi / step - 1e-9) * step
    count = int(round((stop - start) / step))
    return [start + k * step for k in range(count + 1)]


def _fmt(x):
    return f"{x:.2f}"


def _label(x):
    text = f"{x:.6g}"
    return "0" if text in ("-0", "0") else text


def _polyline(xs, ys, color, dash, label):
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline data-series="{label}" fill="none" stroke="{color}" stroke-width="1.5"'
            f'{dash_attr} points="{pts}"/>')


def _envelopes(doc):
    b = doc.bounds or {}
    lower = b.get("l") if b.get("l") is not None else b.get("y")
    upper = b.get("u") if b.get("u") is not None else b.get("z")
    track = doc.track
    n = doc.n
    if upper is None:
        upper = track["w_max"] if "w_max" in track else [0.5 * v * v for v in track["v_max"]]
    if lower is None:
        lower = [track["w_init"]] + [0.0] * (n - 2) + [track["w_fin"]]
    return np.asarray(lower, float), np.asarray(upper, float)


def render_svg(doc):
    """SVG text for a :class:`~speedplan.io.ProfileDocument` with a solution."""
    if doc.w is None or doc.f is None:
        raise ValueError("profile has no solution arrays")
    n = doc.n
    h = float(doc.track["h"])
    s = h * np.arange(n)
    lower, upper = _envelopes(doc)
    data = {
        "v": (s, np.sqrt(2.0 * np.maximum(np.asarray(doc.w, float), 0.0))),
        "lower": (s, np.sqrt(2.0 * np.maximum(lower, 0.0))),
        "upper": (s, np.sqrt(2.0 * np.maximum(upper, 0.0))),
        # force is constant on each step: plot it at segment midpoints
        "f": (s[:-1] + 0.5 * h, np.asarray(doc.f, float)),
    }
    for key, (_, ys) in data.items():
        if not np.all(np.isfinite(ys)):
            raise ValueError(f"series {key} contains non-finite values")

    left_vals = np.concatenate([data[k][1] for k in ("v", "lower", "upper")])
    yticks_l = nice_ticks(0.0, float(left_vals.max()))
    yticks_r = nice_ticks(float(min(0.0, data["f"][1].min())), float(max(0.0, data["f"][1].max())))
    xticks = nice_ticks(0.0, float(s[-1]))

    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + pw * (x - xticks[0]) / (xticks[-1] - xticks[0])

    def sy(y, ticks):
        return TOP + ph * (1.0 - (y - ticks[0]) / (ticks[-1] - ticks[0]))

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in xticks:
        x = sx(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{TOP + ph}" x2="{_fmt(x)}" y2="{TOP + ph + 5}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{TOP + ph + 18}" text-anchor="middle">{_label(t)}</text>')
    for t in yticks_l:
        y = sy(t, yticks_l)
        out.append(f'<line x1="{LEFT - 5}" y1="{_fmt(y)}" x2="{LEFT}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_fmt(y + 4)}" text-anchor="end">{_label(t)}</text>')
    for t in yticks_r:
        y = sy(t, yticks_r)
        out.append(f'<line x1="{LEFT + pw}" y1="{_fmt(y)}" x2="{LEFT + pw + 5}" y2="{_fmt(y)}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{LEFT + pw + 8}" y="{_fmt(y + 4)}" text-anchor="start">{_label(t)}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 15}" text-anchor="middle">s (m)</text>')
    out.append(f'<text x="15" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {TOP + ph / 2})">speed (m/s)</text>')
    out.append(f'<text x="{WIDTH - 15}" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(90 {WIDTH - 15} {TOP + ph / 2})">force per mass (m/s^2)</text>')

    for idx, (key, label, color, dash, axis) in enumerate(SERIES):
        xs, ys = data[key]
        ticks = yticks_l if axis == "left" else yticks_r
        out.append(_polyline([sx(x) for x in xs], [sy(y, ticks) for y in ys], color, dash, label))
        ly = TOP + 14 + 14 * idx
        out.append(f'<line x1="{LEFT + 10}" y1="{ly - 4}" x2="{LEFT + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="1.5"' + (f' stroke-dasharray="{dash}"' if dash else "")
                   + "/>")
        out.append(f'<text x="{LEFT + 35}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(doc, path):
    text = render_svg(doc)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return text
