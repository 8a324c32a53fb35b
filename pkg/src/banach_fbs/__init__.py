"""Forward-backward splitting in sequence and grid Banach spaces.

Library layout:

- :mod:`banach_fbs.spaces` -- weighted norms, duality maps, smoothness constants
- :mod:`banach_fbs.threshold` -- scalar resolvents and the sparse backward step
- :mod:`banach_fbs.operators` -- integration / convolution operators with adjoints
- :mod:`banach_fbs.fbs` -- the splitting iteration and its descent diagnostics
- :mod:`banach_fbs.tv` -- total-variation backward step via the predual
- :mod:`banach_fbs.cli` -- experiment harness (``banach-fbs`` entry point)
"""

from .spaces import DualVector, Exponents, Signal, duality_map, norm, signed_power
from .fbs import ProblemSpec, SolveHistory, StepPolicy, StopRule, fbs_run

__all__ = [
    "Signal",
    "DualVector",
    "Exponents",
    "signed_power",
    "norm",
    "duality_map",
    "ProblemSpec",
    "StepPolicy",
    "StopRule",
    "SolveHistory",
    "fbs_run",
]

__version__ = "0.1.0"
