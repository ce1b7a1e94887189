"""Near-linear-time additive approximation of the squared 2-Wasserstein distance."""
from .errors import CapacityError, InvalidInputError, NumericalUnderflowError, PreconditionError
from .exact import exact_ot
from .factored import FactoredMatrix
from .geometry import PointCloud, cost_decomposition, normalize
from .kernel_features import taylor_gkm
from .rounding import round_to_polytope
from .sinkhorn import SinkhornConfig, sinkhorn_scale
from .solver import TransportResult, approx_w2, coupling_cost, select_params

__all__ = [
    "CapacityError", "FactoredMatrix", "InvalidInputError", "NumericalUnderflowError",
    "PointCloud", "PreconditionError", "SinkhornConfig", "TransportResult", "approx_w2",
    "cost_decomposition", "coupling_cost", "exact_ot", "normalize", "round_to_polytope",
    "select_params", "sinkhorn_scale", "taylor_gkm",
]
