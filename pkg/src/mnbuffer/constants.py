"""Physical constants in the package's unit system.

Energies are in meV, times in ps, decay rates in ns^-1 (converted to
ps^-1 right before they enter an equation of motion).
"""

HBAR = 0.6582119569  # meV ps
KB = 0.08617333262  # meV / K
MU_B = 0.05788382  # meV / T

PER_NS = 1e-3  # ns^-1 -> ps^-1
