"""Numerical lifespan experiments for damped semilinear wave equations.

u_tt - Lap u + b(t) u_t = |u|^p with radial data, studied in the B-time
B(t) = int_0^t 1/b.  Modules: damping, cutoff, wave_solver, scaled_solver,
heat_fujita and experiments.
"""

__version__ = "0.1.0"
