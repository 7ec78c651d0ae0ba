"""Configuration-space knot integrals on closed curves and on periodic orbits of template flows."""

__version__ = "0.1.0"

from .diagrams import TrivalentDiagram, WeightSystem, enumerate_diagrams, parse_diagram, stu_basis  # noqa: E402
from .flow import TemplateFlow, default_flow, load_flow, max_entropy_measure  # noqa: E402
from .knots import Knot, make_knot  # noqa: E402

__all__ = ["Knot", "TemplateFlow", "TrivalentDiagram", "WeightSystem", "default_flow", "enumerate_diagrams",
           "load_flow", "make_knot", "max_entropy_measure", "parse_diagram", "stu_basis", "__version__"]
