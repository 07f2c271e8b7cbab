"""Normalizations shared by every Kempf-Ness computation.

Changing any constant here changes the numbers in every downstream identity
consistently; nothing else in the package hard-codes them.

* ``rho`` maps the real Lie algebra to skew-Hermitian matrices.  Tori act by
  ``rho(xi) = -i diag(W^T xi)``; SU(2) uses the basis ``xi_a = -i sigma_a / 2``
  realized through spin-j matrices as ``rho(xi_a) = -i J_a``.
* ``mu(x)(xi) = MOMENT_FACTOR * <i rho(xi) x, x>``, which is real because
  ``i rho(xi)`` is Hermitian.  For tori this is ``1/2 sum_j W_aj |x_j|^2``.
* The dual Lie algebra is identified with the Lie algebra by the coordinate
  pairing in the basis above.  For SU(2) this basis is orthonormal for
  ``-2 tr(AB)``, the negative trace form on the defining representation.
* Along ``s -> exp(i s rho(xi)) x`` the Kempf-Ness function ``h = log |x|^2``
  has derivative ``GRADIENT_CONSTANT * mu(x)(xi) / |x|^2``.
"""

MOMENT_FACTOR = 0.5
GRADIENT_CONSTANT = 4.0  # d/ds |x|^2 = 2 <i rho x, x> = (2 / MOMENT_FACTOR) mu
ARMIJO = 1e-4
GRAD_TOL = 1e-10
# h below this floor means |x|^2 < e^-60: the orbit closure reaches zero
H_FLOOR = -60.0
NULLSPACE_ZERO = 1e-9
NULLSPACE_GAP = 1e-5
CRITICAL_TOL = 1e-8
