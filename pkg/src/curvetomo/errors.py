"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class CurveTomoError(Exception):
    exit_code = 1


class ConfigParse(CurveTomoError):
    exit_code = 2


class FileFormat(CurveTomoError):
    exit_code = 3


class RootRefinementFailure(CurveTomoError):
    exit_code = 10


class IntersectionOverflow(CurveTomoError):
    """More hyperplane/curve intersections than the configured cap."""

    exit_code = 11


class GeometryMismatch(CurveTomoError):
    exit_code = 12


class SupportTooClose(CurveTomoError):
    exit_code = 13


class SupportViolation(CurveTomoError):
    exit_code = 14


class NotInXiDelta(CurveTomoError):
    exit_code = 20


class NoIntersections(CurveTomoError):
    exit_code = 21


class RankDeficient(CurveTomoError):
    exit_code = 22


class InsufficientDecay(CurveTomoError):
    exit_code = 23


EXIT_CODES = {
    cls.__name__: cls.exit_code
    for cls in (
        CurveTomoError,
        ConfigParse,
        FileFormat,
        RootRefinementFailure,
        IntersectionOverflow,
        GeometryMismatch,
        SupportTooClose,
        SupportViolation,
        NotInXiDelta,
        NoIntersections,
        RankDeficient,
        InsufficientDecay,
    )
}
