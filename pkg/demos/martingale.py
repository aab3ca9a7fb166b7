"""Monte Carlo look at the one-point martingale for chordal kappa = 2.

The mean of M_t at a fixed point should stay at its starting value.  Dropping
the order term (looking at plain arg G_t) gives a visible drift instead.
"""

import numpy as np

from artifact import coupling as cp
from artifact import fields as fl
from artifact import gff

pair = fl.table_pair(fl.CHORDAL, 2.0)
for t in (0.05, 0.2, 0.5):
    (res,) = cp.mc_martingale(pair, cp.M1_ETA, [1 + 1j], t, 4000, dt=1e-3, seed=0)
    print(f"t = {t:4}: mean {res['mean']:+.4f} +- {res['stderr']:.4f}   start {res['M0']:+.4f}")

arg = fl.ScalarObservable(lambda z: np.angle(z))
for name, obs in (("eta", gff.family_eta(pair)), ("arg", arg)):
    out = cp.drift_estimate(pair, obs, 1 + 1j, 1e-3, 20000, seed=1)
    print(f"drift of {name}: {out['estimate']:+.4f} +- {out['stderr']:.4f}")
