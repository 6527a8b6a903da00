"""Nonlocal dissipation operators, inequality checks and active-scalar solvers on periodic grids."""
