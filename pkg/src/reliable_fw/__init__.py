"""Reliable Frank-Wolfe for safe optimisation over an unknown polytope."""
