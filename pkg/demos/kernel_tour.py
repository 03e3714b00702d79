"""Moments, the diagonal kernel and its log-derivatives for a few radial weights.

Run with ``python demos/kernel_tour.py``.
"""
import math

import numpy as np

from fockspace import build_moment_table, eval_kernel_scaled, kernel_table, log_derivatives, parse_weight
from fockspace.moments import i_ratio

# The linear weight is the classical Fock space: k(r) = e^r / pi, so the
# scaled kernel log|k| - Psi(r) sits at -log(pi) for every r.
lin = kernel_table(parse_weight("linear:a=1"), 200.0)
print("linear weight, scaled log-kernel against -log(pi) =", round(-math.log(math.pi), 12))
for r in (0.0, 10.0, 100.0, 200.0):
    v = eval_kernel_scaled(lin, r)
    print(f"  r={r:6.1f}  log|k| - Psi = {v.log_modulus:.12f}  terms={v.terms_used}")

# Psi = x^2 has moments Gamma((d+1)/2)/2; tables built by quadrature match them.
quad = build_moment_table(parse_weight("monomial:p=2"), 1, 200, method="quadrature")
d = np.arange(201)
from scipy.special import gammaln  # noqa: E402

exact = gammaln((d + 1) / 2) - math.log(2)
print(f"\nPsi = x^2, worst relative error of log s_d for d <= 200: {np.max(np.abs(quad.log_s - exact) / np.maximum(1, np.abs(exact))):.1e}")

# Away from the diagonal the kernel decays like exp(-c r theta^2).  The series
# cancels there, and once the modulus drops under the reported roundoff bound
# only the bound is meaningful.
q = kernel_table(parse_weight("monomial:p=2"), 40.0)
print("\nPsi = x^2 off the diagonal at r = 20:")
for th in (0.0, 0.05, 0.1, 0.2, 0.4):
    v = eval_kernel_scaled(q, 20.0, th)
    note = "  (below roundoff bound)" if v.modulus <= v.roundoff_bound else ""
    print(f"  theta={th:4.2f}  log|k| - Psi = {v.log_modulus:9.3f}{note}")

# The growth rate r k'/k + r^2 (log k)'' tracks r Phi'(r) once r is large.
print("\nratio (r kp + r^2 cv) / (r Phi'(r)):")
for label in ("monomial:p=2", "monomial:p=3", "exp"):
    w = parse_weight(label)
    t = build_moment_table(w, 1, 40)
    row = []
    for r in (50.0, 200.0, 600.0):
        kp, cv = log_derivatives(t, r, "auto")
        row.append((kp + r * cv) / float(w.phi1(r)))
    print(f"  {label:14s}" + "".join(f"{x:10.5f}" for x in row))

# The Laplace-type integral I(t) against its asymptotic form.
print("\nI(t) / asymptotic at t = 1000:")
for label in ("linear:a=1", "monomial:p=2", "exp"):
    print(f"  {label:14s}{i_ratio(parse_weight(label), 1000.0).ratio:.6f}")
