"""Factor-graph partition functions, their Bethe approximations via
sum-product fixed points and finite graph covers, permanents of
non-negative matrices, the loop-calculus transform, and the
symmetric-subspace route to cover averages."""

__version__ = "0.1.0"
