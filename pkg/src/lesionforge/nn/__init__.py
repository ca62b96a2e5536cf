"""Minimal NN stack: conv/dense layers with hand-derived backward passes.

Everything is plain numpy; forward functions return (output, cache) and the
matching backward functions consume (cache, upstream gradient).  The stack is
dtype-agnostic so the gradient audit can run the same graphs in float64.
"""
