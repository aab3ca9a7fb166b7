"""Sample a GFF with a chordal boundary mean against four bump functions."""

import numpy as np

from artifact import fields as fl
from artifact import gff

obs = gff.ObservableSet([gff.Bump(c, 0.3) for c in (1j, 1 + 1j, -1 + 2j, 2.5j)])
kernel = gff.CovarianceKernel(gff.DIRICHLET)
eta = gff.family_eta(fl.table_pair(fl.CHORDAL, 4.0))
ens = gff.gff_sample(obs, kernel, eta, 50000, seed=1)

cov = gff.pairing_matrix(kernel, obs)
print("pairing matrix:")
print(np.array2string(cov, precision=4))
for key, val in ens.summary().items():
    print(f"{key}: {np.array2string(np.asarray(val), precision=4)}")
