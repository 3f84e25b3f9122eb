"""Simulation and verification lab for mean-field SDEs with Levy noise.

Subpackages cover subordinator sampling, Levy noise generation, Euler
solvers for plain and interacting-particle systems, empirical transport
distances, and the verification suites (contraction, Girsanov coupling,
Harnack-type inequalities, nonlinear Fokker-Planck cross checks).
"""

__version__ = "0.1.0"

from .streams import stream
from .subordinator import BernsteinSpec, SubordinatorPath
from .levy_noise import LevyTriplet, NoiseIncrements
from .mkv import MkvDrift, ParticleEnsemble

__all__ = [
    "BernsteinSpec",
    "SubordinatorPath",
    "LevyTriplet",
    "NoiseIncrements",
    "MkvDrift",
    "ParticleEnsemble",
    "stream",
    "__version__",
]
