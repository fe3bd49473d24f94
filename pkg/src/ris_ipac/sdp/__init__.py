"""Semidefinite programming backend.

Callers go through :func:`get_backend` so an external solver can be
registered under a new name without touching them.
"""
from .bundled import bundled_problems
from .embed import hermitian_embed, hermitian_unembed, real_functional
from .ipm import solve
from .problem import Constraint, SdpProblem, SdpSolution
from .randomize import RandomizationResult, gaussian_randomize, principal_vector, sample_cn

_BACKENDS = {"ipm": solve}


def register_backend(name, fn):
    """Register ``fn(problem, tol=..., max_iter=...) -> SdpSolution``."""
    _BACKENDS[name] = fn


def get_backend(name="ipm"):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise KeyError(f"unknown SDP backend {name!r}; known: {sorted(_BACKENDS)}") from None


__all__ = [
    "Constraint", "SdpProblem", "SdpSolution", "solve", "get_backend", "register_backend",
    "hermitian_embed", "hermitian_unembed", "real_functional",
    "gaussian_randomize", "sample_cn", "principal_vector", "RandomizationResult",
    "bundled_problems",
]
