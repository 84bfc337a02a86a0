"""Stochastic flows on manifolds and the null-homotopy of pushed sphere maps.

Geometry (``manifolds``), Stratonovich flow simulation with tangent flows
(``flow``), geodesic homotopies (``homotopy``), moment and diameter
estimates (``moments``) and the end-to-end runner (``experiment``, ``cli``).
"""

from .errors import (BeyondInjectivityRadius, ConfigInvalid, FlowtopError, HorizonExceeded, NoValidTime,
                     ProjectionIllConditioned, ResolutionTooCoarse)
from .fields import (GeometricMultiplicative, HyperbolicContraction, LinearContraction, SphereGradientFrame,
                     TorusTranslation, VectorFieldSpec, ZeroField)
from .flow import FlowRealization, flow_map, tangent_flow
from .manifolds import Euclidean, FlatTorus, Hyperbolic2, Manifold, Sphere
from .tolerances import TOL

__version__ = "0.1.0"
