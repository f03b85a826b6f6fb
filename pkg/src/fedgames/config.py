"""Central tolerance settings.

All structural identities (block patterns, inverse identities, KKT
residuals) are checked against ``structural``; Monte-Carlo quantities
against ``stochastic``. Symmetry of Riccati-type iterates uses its own,
slightly looser bound because roundoff accumulates over the horizon.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    structural: float = 1e-10
    stochastic: float = 1e-6
    symmetry: float = 1e-9


DEFAULT_TOLERANCES = Tolerances()
