"""Exception hierarchy for the confdeform package.

Exit-code mapping used by the CLI: BadInputError -> 2, SolverError -> 3,
SymmetryViolation -> 4.
"""


class ConfDeformError(Exception):
    """Base class for all package errors."""


class BadInputError(ConfDeformError):
    """Invalid user input (files, targets, topology)."""


class SolverError(ConfDeformError):
    """Numerical failure inside the deformation machinery."""


# --- mesh / connectivity ---

class NonManifold(BadInputError):
    pass


class InconsistentOrientation(BadInputError):
    pass


class BoundaryEdge(ConfDeformError):
    pass


class UnflippableConfiguration(SolverError):
    """Edge whose two incident faces coincide; the quad switch is undefined."""


class NoBoundary(BadInputError):
    pass


# --- metric ---

class DegenerateTriangle(ConfDeformError):
    pass


class NonConvexQuad(SolverError):
    pass


class FlipLimitExceeded(SolverError):
    pass


# --- deformation ---

class BadTarget(BadInputError):
    pass


class BadTargetSum(BadTarget):
    pass


class IndexOutOfRange(BadInputError):
    pass


class NotDelaunayAtStart(SolverError):
    pass


class NotCocircular(SolverError):
    pass


class SwitchCapExceeded(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


class SingularBeyondNullspace(SolverError):
    """Hessian singular beyond the constant null space (disconnected mesh)."""


# --- refinement / map ---

class DegenerateIntersection(SolverError):
    pass


class PointNotLocated(ConfDeformError):
    pass


# --- doubling ---

class SymmetryViolation(ConfDeformError):
    pass


# --- layout / report ---

class TopologyMismatch(BadInputError):
    pass


class EmptyInclusion(ConfDeformError):
    pass


class NotOnSphere(BadInputError):
    pass


# --- io ---

class ParseError(BadInputError):
    pass


class NonTriangleFace(ParseError):
    pass


class FoldWarning(UserWarning):
    """Layout produced a non-positively oriented face (reported, not fatal)."""
