"""Region diagram of sweep verdicts as a standalone SVG.

Left panel: the rectangle ``(|zeta|, lambda)``.  Right panel: the half disc
of atomic states with radius ``2 sqrt(lambda (1 - lambda)) |zeta|`` and
height ``2 lambda - 1``.  Blue marks existence, red non-existence, unknown
points are left blank (outlined); non-thermal points (``zeta != 0``) are
hatched.
"""

import numpy as np

COLORS = {"exists": "#1f5fbf", "not_exists": "#c8302c"}
SIZE = 200.0
PAD = 30.0


def _marker(x, y, verdict, hatched, r):
    fill = COLORS.get(verdict)
    out = []
    if fill is None:
        out.append(f'<rect x="{x - r:.3f}" y="{y - r:.3f}" width="{2 * r:.3f}" height="{2 * r:.3f}" '
                   f'fill="none" stroke="#bbbbbb" stroke-width="0.3"/>')
        return out
    out.append(f'<rect x="{x - r:.3f}" y="{y - r:.3f}" width="{2 * r:.3f}" height="{2 * r:.3f}" '
               f'fill="{fill}"/>')
    if hatched:
        out.append(f'<rect x="{x - r:.3f}" y="{y - r:.3f}" width="{2 * r:.3f}" height="{2 * r:.3f}" '
                   f'fill="url(#hatch)"/>')
    return out


def region_svg(records, title="invariant states"):
    """Render ``records`` (dicts with lambda, zeta_re, zeta_im, verdict)."""
    recs = sorted(records, key=lambda d: (d["lambda"], d["zeta_re"], d["zeta_im"]))
    n_lam = max(1, len({d["lambda"] for d in recs}))
    r = max(0.8, 0.5 * SIZE / n_lam)
    w = 2 * SIZE + 3 * PAD
    h = SIZE + 2 * PAD
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}">',
        "<defs>",
        '<pattern id="hatch" width="3" height="3" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)">',
        '<line x1="0" y1="0" x2="0" y2="3" stroke="#ffffff" stroke-width="0.8"/>',
        "</pattern>",
        "</defs>",
        f'<text x="{PAD:.0f}" y="{PAD * 0.6:.0f}" font-size="11" font-family="sans-serif">'
        f"{title}</text>",
    ]
    x0, y0 = PAD, PAD
    parts.append(f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{SIZE:.3f}" height="{SIZE:.3f}" '
                 'fill="none" stroke="#000000" stroke-width="0.6"/>')
    cx, cy = 2 * PAD + SIZE, PAD + SIZE / 2
    rad = SIZE / 2
    parts.append(f'<path d="M {cx:.3f} {cy - rad:.3f} A {rad:.3f} {rad:.3f} 0 0 1 {cx:.3f} '
                 f'{cy + rad:.3f} Z" fill="none" stroke="#000000" stroke-width="0.6"/>')
    for d in recs:
        lam = d["lambda"]
        z = complex(d["zeta_re"], d["zeta_im"])
        hatched = abs(z) > 0
        # rectangle: |zeta| to the right, lambda upwards
        px = x0 + abs(z) * SIZE
        py = y0 + (1.0 - lam) * SIZE
        parts += _marker(px, py, d["verdict"], hatched, r)
        # half disc
        rr = 2.0 * np.sqrt(lam * (1.0 - lam)) * abs(z)
        zz = 2.0 * lam - 1.0
        parts += _marker(cx + rr * rad, cy - zz * rad, d["verdict"], hatched, r)
    labels = [(x0, y0 + SIZE + 14, "|zeta| (lambda upwards)"),
              (cx, y0 + SIZE + 14, "radius 2 sqrt(lambda(1-lambda))|zeta|")]
    for x, y, s in labels:
        parts.append(f'<text x="{x:.0f}" y="{y:.0f}" font-size="8" font-family="sans-serif">{s}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
