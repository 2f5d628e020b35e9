"""Normalized Kahler-Ricci flow of radial metrics on the ball, with estimate diagnostics.

Modules by layer:

* :mod:`kahler_flow.hermitian`: pointwise Hermitian algebra and curvature inequalities
* :mod:`kahler_flow.radial`: U(n)-invariant metrics from radial potentials
* :mod:`kahler_flow.flow`: method-of-lines integration of the potential flow
* :mod:`kahler_flow.diagnostics`: monitored quantities and the verdict
* :mod:`kahler_flow.cli`: command-line runner
"""

__version__ = "0.1.0"
