"""
Computation engines for mean-variance hedging on finite event trees
"""
