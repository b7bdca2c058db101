"""Stability of polycycles in planar hybrid systems: definitions, flows, local
normal-form ratios, graphic numbers and numerical return maps."""

__version__ = "0.1.0"

from .expr import parse_expression, differentiate, taylor_coefficients
from .sysdef import Tolerances, HybridSystemDef, load_system, load_system_file, classify_point
from .flow import SectionDef, flow_hybrid
from .local import analyze_saddle, analyze_jump, reverse_system
from .polycycle import analyze_polycycle, graphic_number, load_spec, load_spec_file
from .retmap import return_map, stability_probe, find_fixed_point

__all__ = [
    "__version__", "parse_expression", "differentiate", "taylor_coefficients", "Tolerances",
    "HybridSystemDef", "load_system", "load_system_file", "classify_point", "SectionDef",
    "flow_hybrid", "analyze_saddle", "analyze_jump", "reverse_system", "analyze_polycycle",
    "graphic_number", "load_spec", "load_spec_file", "return_map", "stability_probe",
    "find_fixed_point",
]
