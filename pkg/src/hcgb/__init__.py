"""Heat-kernel supertraces for totally geodesic foliations.

Subpackages cover the Fermionic operator calculus, Brownian bridge Chen
series, foliation tensor models, Carnot group tangent cones, the two routes
to the horizontal Euler form, and a simplicial McKean-Singer checker.
"""

__version__ = "0.1.0"
