"""Desk-scale numerics for the Lieb-Loss product-state model.

Modules
-------
functional   radial profiles, the auxiliary functional F_beta and its minimizer
shell        momentum-shell quadrature and the interaction operator
spectral     the trace functional X(A) = Tr(sqrt(k^2+A) - |k|) and friends
fock         truncated-Fock brute force for quadratic boson Hamiltonians
asymptotics  sweeps, scaling-exponent fits, convention adjudication
sweep_io     config parsing and deterministic record/fixture formats
cli          subcommand front end
"""

__version__ = "0.1.0"
