"""Grow chordal traces for a few kappa and save them as one SVG.

Run with ``python3 demos/traces.py [out.svg]``.  Each trace uses the same
Brownian increments scaled by sqrt(kappa), so the pictures differ only by
the roughness that kappa controls.
"""

import sys

import numpy as np

from artifact import fields as fl
from artifact import loewner as lw

t = np.linspace(0.0, 1.0, 801)
rng = np.random.default_rng(2024)
dW = rng.standard_normal(t.size - 1) * np.sqrt(np.diff(t))

colors = {1.0: "#1b9e77", 8 / 3: "#d95f02", 4.0: "#7570b3", 6.0: "#e7298a"}
lines = []
for kappa, color in colors.items():
    tips = lw.trace(fl.table_pair(fl.CHORDAL, kappa), t, np.sqrt(kappa) * dW)
    print(f"kappa = {kappa:.3g}: tip at t = 1 is {tips[-1]:.3f}, max height {tips.imag.max():.3f}")
    pts = " ".join(f"{200 + 80 * z.real:.2f},{380 - 80 * z.imag:.2f}" for z in tips)
    lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>')

out = sys.argv[1] if len(sys.argv) > 1 else "traces.svg"
with open(out, "w") as fh:
    fh.write('<svg xmlns="http://www.w3.org/2000/svg" width="400" height="400">\n')
    fh.write('<line x1="0" y1="380" x2="400" y2="380" stroke="black"/>\n')
    fh.write("\n".join(lines) + "\n</svg>\n")
print(f"wrote {out}")
