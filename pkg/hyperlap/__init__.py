"""
Hypergraph p-Laplacian toolkit

Energies and (sub)gradients of the hypergraph p-Laplacian and its smooth
q-approximations, penalized/constrained/free evolution equations, optimal
control of the penalized problem, and Poincare/eigenvalue/resolvent
quantities, behind a single command-line tool.
"""

__version__ = "1.0.0"
