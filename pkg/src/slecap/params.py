"""Global parameters of the curve family.

All formulas in the package are driven by kappa through

    a = 2/kappa            (capacity rate; hcap of the curve grows as a*t)
    b = (3a - 1)/2         (boundary scaling exponent)
    c = (6-kappa)(3kappa-8)/(2kappa)   (central charge)

kappa in (0, 8) forces a > 1/4, which is what makes the driving process hit
the origin in finite time.  The main two-sided experiments additionally need
kappa <= 4 (simple curves); that is checked where required, not here.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Params:
    kappa: float
    a: float
    b: float
    central_charge: float

    @classmethod
    def from_kappa(cls, kappa: float) -> "Params":
        kappa = float(kappa)
        if not 0.0 < kappa < 8.0:
            raise ValueError(f"kappa must lie in (0, 8), got {kappa}")
        a = 2.0 / kappa
        b = (3.0 * a - 1.0) / 2.0
        cc = (6.0 - kappa) * (3.0 * kappa - 8.0) / (2.0 * kappa)
        return cls(kappa=kappa, a=a, b=b, central_charge=cc)

    def __post_init__(self):
        if not 0.0 < self.kappa < 8.0:
            raise ValueError(f"kappa must lie in (0, 8), got {self.kappa}")
        # a > 1/4 is automatic on (0, 8); guard anyway since every density
        # normalization below depends on it.
        if self.a <= 0.25:
            raise ValueError(f"capacity rate a = {self.a} must exceed 1/4")

    @property
    def simple_curves(self) -> bool:
        """True when the curve regime is simple (kappa <= 4, a >= 1/2)."""
        return self.kappa <= 4.0
