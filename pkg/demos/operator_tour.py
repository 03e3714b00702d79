"""Hankel operators with antiholomorphic monomial symbols, and the tests around them.

Run with ``python demos/operator_tour.py``.
"""
import numpy as np

from fockspace import kernel_table, parse_weight
from fockspace.geometry import build_lattice
from fockspace.operators import (
    NormalizedBasis,
    PointMasses,
    RadialMeasure,
    besov_diagnostic,
    bloch_seminorm,
    carleson_test,
    hankel_spectrum,
    mo_profile,
)

tables = {label: kernel_table(parse_weight(label), 70.0) for label in ("linear:a=1", "monomial:p=2", "monomial:p=3")}

# H*H is diagonal in the monomial basis, so boundedness, compactness and
# Schatten membership are read off the eigenvalues lambda_d.
print("H with symbol conj(z^m):")
print(f"  {'weight':14s} m  bounded     compact      S_4 verdict")
for label, t in tables.items():
    basis = NormalizedBasis(t)
    for m in (1, 2):
        s = hankel_spectrum(basis, m, min(2000, t.d_max - m), p_values=(4.0,))
        print(f"  {label:14s} {m}  {s.boundedness:11s} {s.compactness:12s} {s.schatten[4.0].verdict}")

# The mean oscillation of z decays for Psi = x^2 and the Bloch-type quotient follows it.
t = tables["monomial:p=2"]
grid = np.linspace(0.0, 8.0, 5)
mo = mo_profile(NormalizedBasis(t), 1, grid)
bl = bloch_seminorm(t, [0.0, 1.0], grid)
print("\nPsi = x^2, f = z:")
for x, a, b in zip(grid, mo.mo, bl.profile):
    print(f"  |z|={x:3.1f}  MO={a:.4f}  |f'|/beta={b:.4f}")
print(f"  verdicts: {mo.bmo_verdict} / {mo.vmo_verdict}")

# Carleson measures: area measure passes, a density growing like e^{Psi/2} fails,
# and lattice point masses pass with a bounded ratio.
basis = NormalizedBasis(t)
zs = np.linspace(0.0, 4.0, 9)
area = carleson_test(basis, RadialMeasure.lebesgue(), zs)
grow = carleson_test(basis, RadialMeasure("growing", lambda x: 0.5 * t.weight.psi(x)), zs)
lat = build_lattice(t, 2.5, 0.5, layout="greedy")
pts = carleson_test(basis, PointMasses.lattice_measure(t, lat.points), zs[:5], lattice=lat)
print(f"\nCarleson: area {area.verdict}, growing {grow.verdict}, lattice {pts.verdict} "
      f"(ratio spread {pts.ratio_spread:.2f})")

# The Besov-type integral for f = z converges once p exceeds 3 for Psi = x^2.
print("\nBesov integral of f = z, Psi = x^2:")
for p in (3.0, 4.0, 5.0, 6.0):
    b = besov_diagnostic(t, 1, p)
    print(f"  p={p}  tail exponent {b.tail_exponent:+.2f}  {b.tail_verdict:10s}  integral {b.full_integral:.6g}")
