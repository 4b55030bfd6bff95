"""Randomized primal-dual linear programming solver for discounted MDPs."""
