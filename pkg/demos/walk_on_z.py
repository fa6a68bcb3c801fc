"""Biased walk on Z: rate function, quasipotential and Green's function.

Every number printed here has a closed form for the (0.7, 0.3) walk, so the
script doubles as a sanity check of the numerical routines.

    python demos/walk_on_z.py
"""

import math

from greenldp import TargetSet, green_full, legendre, nearest_neighbor, quasipotential
from greenldp.oracles import nn1d_green, nn1d_legendre

walk = nearest_neighbor([0.7, 0.3])

print("Cramer rate of the average velocity v")
for v in (-0.5, 0.0, 0.4, 0.9):
    r = legendre(walk, [v])
    print(f"  v={v:+.1f}  numeric {r.value:.12f}  closed form {max(0.0, nn1d_legendre(0.7, v)):.12f}")

# Moving against the drift costs log(7/3) per unit distance, reached at the
# speed 1/T* = 0.4; moving with it is free.
for target in (-1.0, -3.0, 2.0):
    r = quasipotential(walk, [0.0], [target])
    print(f"I(0, {target:+.0f}) = {r.value:.12f}   T* = {r.t_star:.6f}")
print(f"log(7/3)  = {math.log(7 / 3):.12f}")

print("\nGreen's function G(0, {y}) against 2.5 (3/7)^max(-y, 0)")
for y in (3, 0, -5, -15):
    g = green_full(walk, (0,), TargetSet((float(y),), 0.5, 1)).value
    print(f"  y={y:+3d}  {g:.6e}  {nn1d_green(0.7, y):.6e}")
