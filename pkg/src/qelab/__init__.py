"""qelab: a desk-scale numerical laboratory for computational entropy
of quantum states.

Subpackages cover operator algebra (opalg), states and entropies
(qstate), matrix multiplicative-weights games (mmwu), sampling-based
tomography of binary measurements (tomog), leakage simulation
(leaksim), computational-entropy certificates (centropy), counterexample
constructions (phenomena), a leakage-resilient stream-cipher game
(cipher), and the experiment runner (cli).
"""

from . import _kernel

__version__ = "0.1.0"

kernel_backend = _kernel.backend
