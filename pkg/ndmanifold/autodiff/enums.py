from __future__ import annotations

from ..types import CustomStrEnum

__all__ = [
    'OpKind'
]


class OpKind(CustomStrEnum):
    """Primitive operations known to the tape."""

    LEAF = 'leaf'
    """A watched parameter. Has no inputs."""

    ADD = 'add'
    """Elementwise sum; either side may be a scalar."""

    SUB = 'sub'
    """Elementwise difference; either side may be a scalar."""

    MUL = 'mul'
    """Elementwise product; either side may be a scalar."""

    DIV = 'div'
    """Elementwise quotient; either side may be a scalar."""

    NEG = 'neg'
    """Elementwise negation."""

    MATMUL = 'matmul'
    """Matrix product over the last two axes, identical leading axes."""

    TANH = 'tanh'
    """Hyperbolic tangent."""

    EXP = 'exp'
    """Natural exponential."""

    LOG = 'log'
    """Natural logarithm. Non-positive inputs produce a non-finite error."""

    SQRT = 'sqrt'
    """Square root. Non-positive inputs produce a non-finite error."""

    SQUARE = 'square'
    """Elementwise square."""

    SOFTPLUS = 'softplus'
    """Numerically stable ``log(1 + exp(x))``."""

    CLIP = 'clip'
    """Clamp into ``[low, high]``; zero gradient outside the band."""

    SUM = 'sum'
    """Sum over an axis, or over everything."""

    MEAN = 'mean'
    """Mean over an axis, or over everything."""

    VARIANCE = 'variance'
    """Population variance (divide by N) over an axis, or over everything."""

    CONCAT = 'concat'
    """Join arrays along an existing axis."""

    SLICE = 'slice'
    """Basic or integer-array indexing."""

    TRANSPOSE = 'transpose'
    """Axis permutation."""

    RESHAPE = 'reshape'
    """Shape change preserving row-major order."""

    BROADCAST = 'broadcast'
    """Explicit expansion to a larger shape."""

    EINSUM = 'einsum'
    """Two-operand Einstein summation."""

    INV = 'inv'
    """Batched matrix inverse."""

    LOGDET = 'logdet'
    """Batched log-determinant of symmetric positive-definite matrices."""
