"""Hard-constrained differentiable architecture search."""
