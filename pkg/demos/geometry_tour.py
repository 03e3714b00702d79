"""Bergman metric, distances, balls and a lattice for Psi = x^2.

Run with ``python demos/geometry_tour.py``; the lattice is written to
``lattice.csv`` in the working directory.
"""
import math

from fockspace import kernel_table, parse_weight
from fockspace.geometry import (
    MetricField,
    ball_volume,
    build_lattice,
    distance,
    grid_distance,
    lattice_checks,
    lattice_density,
    metric,
    save_lattice,
)

w = parse_weight("monomial:p=2")
t = kernel_table(w, 40.0)

# The metric grows like Phi'(|z|^2) = 4|z|^2 in the radial direction.
print("beta^2(z, 1) against Phi'(|z|^2):")
for z in (1.0, 3.0, 5.0):
    s = metric(t, z, 1.0)
    print(f"  |z|={z}  beta^2={s.beta2:10.4f}  alpha^2={s.alpha2:8.2f}  ratio={s.ratio:.4f}")

# Distances: the straight segment is an upper bound, the grid geodesic sits below it.
z, u = 0.5, 2.0 + 1.0j
seg = distance(t, z, u).rho_hat
fine, coarse = grid_distance(MetricField(t, 3.0), z, u)
print(f"\nrho({z}, {u}): segment {seg:.4f}, grid {fine:.4f} (coarser grid {coarse:.4f})")

# Unit balls shrink like 1/|z|^2; scaled by the local ellipse area they stay near pi.
print("\nunit ball volume:")
for z in (2.0, 4.0, 6.0):
    b = ball_volume(t, z, 1.0)
    print(f"  |z|={z}  volume={b.measured:.5f}  volume / ellipse model = {b.measured / b.model_estimate / math.pi:.3f} pi")

# A lattice with covering radius 1/2: separated, covering, and denser farther out.
lat = build_lattice(t, 2.5, 0.5, layout="greedy")
chk = lattice_checks(lat)
dens = lattice_density(lat, inner=0.4)
print(f"\nlattice on |z| <= 2.5: {chk['points']} points, separation {chk['min_separation']:.3f}, "
      f"cover {chk['max_cover']:.3f}, multiplicity {chk['multiplicity']}")
print(f"inverse spacing grows like |z|^{dens['linear_slope']:.2f}")
print("wrote", save_lattice(lat, "lattice.csv"))
