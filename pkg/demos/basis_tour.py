"""A short tour of the distance and angle bases.

Prints the normalized radial features of a C-H, a C-C and a long-range
pair, then the angular features of a few bond angles, and checks that the
angular basis is orthogonal under Gauss-Legendre quadrature.

    python demos/basis_tour.py
"""

import numpy as np

from lmpnn.basis import AngularBasisConfig, RadialBasisConfig, expand_angle_cosine, expand_distance, orthogonality_residual

np.set_printoptions(precision=3, suppress=True, linewidth=110)

radial = RadialBasisConfig(num_functions=6)
for label, d in [("C-H", 1.09), ("C-C", 1.54), ("1,3 pair", 2.5), ("edge of cutoff", 3.99)]:
    print(f"{label:>15} {d:5.2f} A  {expand_distance(d, radial)}")

print()
angular = AngularBasisConfig(num_functions=6)
for label, deg in [("linear", 180.0), ("tetrahedral", 109.47), ("right", 90.0)]:
    print(f"{label:>15} {deg:6.2f} deg  {expand_angle_cosine(np.cos(np.radians(deg)), angular)}")

print()
gram = np.array([[orthogonality_residual(i, j) for j in range(5)] for i in range(5)])
print("Gram matrix of P_0..P_4 on [-1, 1]:")
print(gram)
