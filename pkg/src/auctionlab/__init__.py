"""LP relaxations and approximately revenue-optimal auctions for bidders with
budgets and demand caps, with Monte Carlo and exact oracles to check them."""

from .dist import DiscreteDistribution, classify, virtual_valuation
from .model import CorrelatedInstance, ProductInstance, TypeProfile

__all__ = ["DiscreteDistribution", "classify", "virtual_valuation",
           "CorrelatedInstance", "ProductInstance", "TypeProfile"]
__version__ = "0.1.0"
