"""Heart rate and respiratory rate from (defocused) near-infrared sleep video."""

__version__ = "0.1.0"
