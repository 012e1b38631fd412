"""dhtsim: resilient distributed hypothesis testing on a gridworld.

Typical use::

    from dhtsim import load_scenario, run
    trace = run(load_scenario("bundled-5agent"))
    trace.metrics.convergence_time
"""

from .hypotheses import HypothesisSet, SourceSetIndex, kl_divergence, normalize
from .io import load_scenario, read_trace, save_scenario, write_trace
from .scenario import AgentSpec, ScenarioSpec, TargetSpec
from .simulator import SimulationTrace, compare, run, validate

__all__ = [
    "AgentSpec", "HypothesisSet", "ScenarioSpec", "SimulationTrace", "SourceSetIndex", "TargetSpec",
    "compare", "kl_divergence", "load_scenario", "normalize", "read_trace", "run", "save_scenario",
    "validate", "write_trace",
]

__version__ = "0.1.0"
