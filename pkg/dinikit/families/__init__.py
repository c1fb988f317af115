"""Built-in generator families; importing this package registers them."""

from . import coefficients, data, domains
from .coefficients import coefficient_modulus, generate_coefficients
from .data import DataSet

__all__ = [
    "coefficients",
    "data",
    "domains",
    "coefficient_modulus",
    "generate_coefficients",
    "DataSet",
]
