"""Holomorphy potentials and the finite-dimensional stability picture.

First the kernel of the Lichnerowicz operator on the round sphere (three
complex dimensions, one per rotation), then the toy moment map problem for a
circle acting on C^2 with weights (1, -1) and for SU(2) on C^2.
"""

import numpy as np

from kahlerkit.kempf_ness import LinearAction, extremal_decomposition, kempf_ness_descend, moment_map
from kahlerkit.lichnerowicz import kernel_basis
from kahlerkit.manifold.calculus import reference_metric
from kahlerkit.manifold.grids import ChartGrid

basis = kernel_basis(reference_metric(ChartGrid()))
print("sphere: complex kernel dimension", basis.dim_complex,
      f"; next eigenvalue {basis.spectrum[basis.dim_complex]:.4f} (96 pi^2 = {96 * np.pi ** 2:.4f})")

circle = LinearAction.torus([[1, -1]])
for x in [(1, 1), (2.0, 0.5), (1, 0)]:
    r = kempf_ness_descend(circle, x)
    print(f"circle, start {x}: {r.verdict:10s} mu(start) = {moment_map(circle, x)[0]:+.3f}  final h = {r.state.h:.4f}")

# (1, 0) is critical for |mu|^2 on projective space but mu != 0 and its
# stabilizer is still reductive: the abelian case breaks the converse.
ex = extremal_decomposition(circle, (1, 0))
print("circle at (1,0): reductive", ex.reductive, " mu = 0", ex.moment_zero)

su2 = LinearAction.su2(["1/2"])
ex = extremal_decomposition(su2, (1, 0))
print("SU(2) at (1,0): ad(i mu) eigenvalues", np.round(ex.eigenvalues.real, 6), " reductive", ex.reductive)
