"""Band-limited (Slepian) control protocols for qubit noise spectroscopy.

Simulation and estimation toolkit: DPSS generation, control synthesis
(system-identification modulation, COS and SSB band shifting), filter
transfer functions, synthetic noise, a piecewise-exact qubit simulator and
two spectrum reconstruction procedures (adaptive multitaper and Bayesian
MAP with Fisher-information fusion).
"""

__version__ = "0.1.0"
