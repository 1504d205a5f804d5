#!/usr/bin/env python3
"""Instability onset of the slab tube: lambda_min as a function of height.

Separation of variables predicts the tube between free-boundary walls loses
stability when L exceeds pi r (the axial mode eigenvalue (pi/L)^2 - 1/r^2
turns negative). The sweep locates the onset bracket numerically; below the
onset the smallest eigenvalue rides the translational zero modes.
"""

import math

import numpy as np

from caplab import families, stability

r = 1.0
print(f"{'L':>6s} {'lambda_min':>12s} {'prediction':>12s}")
results = []
for L in np.arange(2.0, 4.0 + 1e-9, 0.1):
    spec = families.Cylinder(r=r, L=float(L), resolution=32)
    mesh, fields = families.generate_mesh(spec)
    system = stability.assemble_index_form(mesh, spec.walls(), fields)
    lam, _ = stability.min_constrained_eigenpair(system)
    predicted = min(0.0, (math.pi / L) ** 2 - 1.0 / r**2)
    results.append((float(L), lam))
    print(f"{L:6.1f} {lam:12.5f} {predicted:12.5f}")

onset_tol = 0.02
bracket = None
for (l0, v0), (l1, v1) in zip(results, results[1:]):
    if v0 >= -onset_tol and v1 < -onset_tol:
        bracket = (l0, l1)
        break
print(f"\nonset bracket at tolerance {onset_tol}: {bracket}")
print(f"theory: L* = pi r = {math.pi * r:.6f}")
print("(the same sweep is available as: caplab sweep cylinder --lmin 2 --lmax 4)")
