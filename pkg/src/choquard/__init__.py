"""Numerical toolkit for the critical Choquard equation on bounded domains."""

from ._core import BACKEND
from .constants import SharpConstants, sharp_constants
from .field import GridDomain, ScalarField, make_box_domain

__version__ = "0.1.0"

__all__ = ["BACKEND", "GridDomain", "ScalarField", "SharpConstants", "make_box_domain", "sharp_constants"]
