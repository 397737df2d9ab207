"""
Reuse-IGA - Quadrature-free isogeometric heat conduction with computation reuse
"""
__version__ = "0.1.0"
