"""Which (kappa, nu) make the dipolar flow couple to a GFF with mixed boundary?

With Dirichlet data on one edge of the strip and Neumann data on the other,
only kappa = 4 with no drift survives.  The flow route estimates the same
residuals from short Moebius flows and is printed next to the analytic one.
"""

from artifact import coupling as cp
from artifact import fields as fl
from artifact import gff

grid = [(fl.DIPOLAR, k, nu, 0.0) for k in (2.0, 3.0, 4.0, 5.0, 6.0) for nu in (0.0, 0.5)]
rows = cp.scan_selection(grid, gff.DIRICHLET_NEUMANN, n=60)
print(cp.verdict_table(rows))

pair = fl.table_pair(fl.DIPOLAR, 4.0)
for method in ("analytic", "flow"):
    rep = cp.residual_system(cp.problem_for(pair, gff.DIRICHLET_NEUMANN, 30), method)
    print(f"{method:>8}: r1 {rep.r1_max:.2e}  r2 {rep.r2_max:.2e}  r3 {rep.r3_max:.2e}")
