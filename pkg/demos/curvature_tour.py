"""A walk through the perturbed scalar curvature on the model spaces.

Run with ``python demos/curvature_tour.py``.  Prints Chern numbers, the
constant curvature of the round metrics and how a random bump on the torus
changes S(t) pointwise while its average stays pinned by topology.
"""

import numpy as np

from kahlerkit._random import stream
from kahlerkit.curvature import admissible_threshold, chern_numbers, curvature, perturbed_scalar, sigma
from kahlerkit.manifold.calculus import flat_metric, metric_from_potential, reference_metric
from kahlerkit.manifold.fubini_study import fubini_study
from kahlerkit.manifold.grids import ChartGrid, TorusGrid


def banner(text):
    print(f"\n== {text} " + "=" * max(0, 60 - len(text)))


banner("projective line, round metric")
fs1 = reference_metric(ChartGrid())
curv1 = curvature(fs1)
print("volume and int c1:", np.round(chern_numbers(curv1), 8))
for t in (0.0, 0.5):
    ps = perturbed_scalar(curv1, t)
    print(f"t={t}: S ranges over [{ps.S.values.min():.6f}, {ps.S.values.max():.6f}]  (4 pi = {4 * np.pi:.6f})")

banner("projective plane, round metric")
fs2 = fubini_study(2)[0]
curv2 = curvature(fs2)
print("volume, int c1 w, int c2:", np.round(chern_numbers(curv2), 10))
for t in (-0.1, 0.0, 0.2):
    ps = perturbed_scalar(curv2, t)
    print(f"t={t:+.1f}: S = {ps.S.values.mean():.8f}   12 pi (1 + t) = {12 * np.pi * (1 + t):.8f}")
print("admissible for t above", round(admissible_threshold(curv2, -0.9, 0.0), 8))

banner("flat two-torus with a random bump")
grid = TorusGrid(2, 16)
g0 = flat_metric(grid)
phi = grid.random_potential(stream(42, 0), 0.002, max_freq=1)
g = metric_from_potential(g0, phi)
curv = curvature(g)
print("int c1 w and int c2 stay at", ", ".join(f"{v:.1e}" for v in chern_numbers(curv)[1:]))
for t in (0.0, 0.2):
    ps = perturbed_scalar(curv, t)
    print(f"t={t}: sigma={sigma(curv, t):.1e}  sup|S|={np.abs(ps.S.values).max():.3e}  "
          f"Calabi energy={ps.calabi_energy:.3e}")
