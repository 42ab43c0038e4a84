"""Machine-learning augmented hybrid simulation with tangent-space
regularized surrogate training."""

__version__ = "0.1.0"
