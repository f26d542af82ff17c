"""drokit: worst-case expectations and risks over ambiguity sets."""

from .core import (AmbiguitySpec, BiAffinePiece, DiscreteDistribution, DroError, GaussianSpec,
                   Infeasible, InvalidInput, MomentPair, PiecewiseLoss, QuadForm, RiskSpec,
                   SolverFailure, SupportSet, TimeoutWithIncumbent, Unbounded, contains,
                   empirical_from_samples, evaluate_loss)

__version__ = "0.1.0"

__all__ = ["AmbiguitySpec", "BiAffinePiece", "DiscreteDistribution", "DroError", "GaussianSpec", "Infeasible",
           "InvalidInput", "MomentPair", "PiecewiseLoss", "QuadForm", "RiskSpec", "SolverFailure", "SupportSet",
           "TimeoutWithIncumbent", "Unbounded", "contains", "empirical_from_samples", "evaluate_loss"]
