"""Graph domain families."""

from typing import List

from ..geometry import GraphDomain
from ..registry import family


@family("domain")
def flat(b: float = 0.5) -> GraphDomain:
    """Half-space patch, γ ≡ 0."""
    return GraphDomain.flat(b=b)


@family("domain")
def parabolic(c: float = 0.25, b: float = 0.5) -> GraphDomain:
    """γ(x¹) = c·(x¹)²."""
    return GraphDomain.parabolic(c=c, b=b)


@family("domain")
def power(alpha: float = 0.5, c: float = 1.0, b: float = 0.1) -> GraphDomain:
    """γ(x¹) = c·|x¹|^{1+α}, a C^{1,α} boundary."""
    return GraphDomain.power(alpha=alpha, c=c, b=b)


@family("domain")
def table(x: List[float], gamma: List[float], b: float) -> GraphDomain:
    """Custom γ sampled at ``x`` and spline-interpolated."""
    return GraphDomain.from_table(x, gamma, b)
