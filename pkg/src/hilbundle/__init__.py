"""Numerical checks for finitely generated projective modules over C^1_0(M).

The package models a flat torus or box on a grid, builds bounded partitions
of unity, Hilbert bundles with their stabilized projections, image bundles
of projection fields, and checks the module/bundle correspondence
numerically.  ``python -m hilbundle run --config <file>`` runs a scenario.
"""

__version__ = "0.1.0"
