"""Boundary-condition experiments for ideal and Coulomb quantum gases.

Submodules: ``geometry``, ``pou``, ``charts``, ``laplacian``, ``statmech``,
``coulomb``, ``lieb_thirring``, ``robin``, ``harness``, ``cli``.
"""

__version__ = "0.1.0"
