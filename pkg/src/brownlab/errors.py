"""Exception types shared across the toolkit.

Validation problems (bad parameters, malformed input) raise ValueError.
Everything that can only be detected while computing derives from
NumericalError so callers (and the CLI) can distinguish the two.
"""

from __future__ import annotations


class NumericalError(Exception):
    """Base class for failures of a numerical procedure."""


class SingularPoint(NumericalError):
    """Evaluation point collides with the support of the measure."""


class GridTooCoarse(NumericalError):
    """Angular grid cannot resolve the domain profile after refinement."""


class NoConvergence(NumericalError):
    """An iteration exhausted its budget without meeting tolerance."""


class OutOfRegion(NumericalError):
    """A continuation path or its solution left the requested region."""


class ShootingDiverged(NumericalError):
    """No multistart seed of the shooting solver converged."""


class SingularInitialPoint(NumericalError):
    """Initial point of a characteristic lies on the support of mu_s."""


class ZeroDensity(NumericalError):
    """Boundary density vanishes where a positive value is required."""


class MissingLowerWord(NumericalError):
    """Moment hierarchy snapshot lacks a required shorter word."""


class StepTooLarge(NumericalError):
    """ODE step-halving error estimate exceeded tolerance."""


class CholeskyFailure(NumericalError):
    """Matrix passed to the log-determinant estimator was not positive."""


class OutsideSource(NumericalError):
    """Point is outside the source domain of the push-forward map."""


class OutsideTarget(NumericalError):
    """Point is outside the target domain of the push-forward map."""
