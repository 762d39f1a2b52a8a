"""Numerical laboratory for stochastic two-phase moving-boundary problems.

Modules:

* :mod:`~stochstefan.spectral` grids, shifted Laplacians and their spectral calculus
* :mod:`~stochstefan.noise` kernels, truncated noise bases, Brownian drivers
* :mod:`~stochstefan.coefficients` coefficient built-ins, Nemytskii operators, audits
* :mod:`~stochstefan.dynamics` the assembled evolution equation and cone diagnostics
* :mod:`~stochstefan.solvers` Ito and Wong-Zakai exponential Euler steppers
* :mod:`~stochstefan.experiments` Monte-Carlo studies
* :mod:`~stochstefan.cli` configuration files and the command line
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree without installation
    __version__ = "0.1.0"
