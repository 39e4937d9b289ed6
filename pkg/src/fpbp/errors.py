"""Exception hierarchy.

``ConfigError`` subclasses signal bad parameters or files (CLI exit code 2);
everything else under ``FpbpError`` is a data error (exit code 3).
"""


class FpbpError(Exception):
    """Base class for all package errors."""


class ConfigError(FpbpError):
    """Invalid parameter, schema or file reference."""


class SchemaVersionError(ConfigError):
    """A file declares a schema major version this reader does not know."""


class UnknownColor(FpbpError):
    """A raster pixel does not match any palette color."""

    def __init__(self, col: int, row: int, color: tuple):
        self.col, self.row, self.color = col, row, tuple(int(c) for c in color)
        hexcol = "#%02x%02x%02x" % self.color[:3]
        super().__init__(f"pixel (x={col}, y={row}) has color {hexcol} outside the palette")


class DegenerateMap(FpbpError):
    """The raster has no walkable pixels or no usable grid."""


class OutOfBounds(FpbpError):
    """A map-coordinate query falls outside the raster."""


class ZeroGradient(FpbpError):
    """No obstacle boundary near the queried point; normal undefined."""


class InsufficientBeacons(FpbpError):
    """Fewer beacons heard than the estimator needs."""


class NoCandidates(FpbpError):
    """GML candidate set empty after every fallback."""


class SingularGeometry(FpbpError):
    """Trilateration system is rank deficient (collinear beacons)."""


class ZeroQuaternion(FpbpError):
    pass


class VerticalDegenerate(FpbpError):
    """Step direction is (nearly) vertical; heading undefined."""


class AllZeroWeights(FpbpError):
    """Every particle weight underflowed to zero; the filter diverged."""


class NormalUnavailable(FpbpError):
    pass


class InfeasiblePath(FpbpError):
    """A scenario waypoint segment crosses a wall."""

    def __init__(self, segment: int, floor: int, hit):
        self.segment, self.floor, self.hit = segment, floor, hit
        super().__init__(
            f"waypoint segment {segment} on floor {floor} hits a wall at "
            f"({hit[0]:.3f}, {hit[1]:.3f})"
        )


class LengthMismatch(FpbpError):
    """Outputs and ground truth cannot be aligned step by step."""
