"""Physical constants (SI) used throughout the package.

Gyromagnetic ratios are stored as magnitudes in rad s^-1 T^-1.
"""

from __future__ import annotations

from dataclasses import dataclass
import math


@dataclass(frozen=True)
class PhysicalConstants:
    gamma_C: float = 2 * math.pi * 10.7084e6
    gamma_e: float = 2 * math.pi * 28.024e9
    hbar: float = 1.054571817e-34
    mu0: float = 1.25663706212e-6
    k_B: float = 1.380649e-23

    def __post_init__(self):
        for name in ("gamma_C", "gamma_e", "hbar", "mu0", "k_B"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def gamma_ratio(self) -> float:
        return self.gamma_e / self.gamma_C

    @property
    def dipolar_prefactor(self) -> float:
        """mu0 / (4 pi) in T^2 m^3 J^-1."""
        return self.mu0 / (4 * math.pi)


CONSTANTS = PhysicalConstants()

ANGSTROM = 1e-10
DIAMOND_LATTICE_CONSTANT = 3.567  # Angstrom
PPM = 1e-6
