"""Tensor-network binary image classifier and its two-qubit sequential circuit.

Modules: ``dataset`` (IDX/PGM input), ``features`` (DCT features and the
qubit feature map), ``mps`` (the classifier), ``training`` (sweep
optimization and feature selection), ``compiler`` (MPS to gates),
``simulator`` (density-matrix execution), ``noise`` (Monte Carlo),
``evaluation`` (reports and sweeps), ``persistence`` and ``cli``.
"""

__version__ = "0.1.0"
