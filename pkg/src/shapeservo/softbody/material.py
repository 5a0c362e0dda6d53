"""Elastic material parameters."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import InvalidInputError


@dataclass(frozen=True)
class Material:
    """Isotropic linear-elastic material with Rayleigh damping.

    youngs_modulus in Pa, density in kg/m^3. rayleigh_mass (1/s) damps rigid
    motion, rayleigh_stiffness (s) damps high-frequency element modes.
    """

    youngs_modulus: float
    poisson_ratio: float = 0.3
    density: float = 1000.0
    rayleigh_mass: float = 5.0
    rayleigh_stiffness: float = 0.01

    def __post_init__(self):
        if self.youngs_modulus <= 0.0:
            raise InvalidInputError("youngs_modulus must be > 0")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise InvalidInputError("poisson_ratio must be in [0, 0.5)")
        if self.density <= 0.0:
            raise InvalidInputError("density must be > 0")

    @property
    def lame(self) -> tuple[float, float]:
        """(mu, lambda) Lamé parameters."""
        e, nu = self.youngs_modulus, self.poisson_ratio
        mu = e / (2.0 * (1.0 + nu))
        lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return mu, lam
