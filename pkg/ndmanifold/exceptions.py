from __future__ import annotations

from typing import Any, Callable

__all__ = [
    'FuncExceptT',

    'CustomError',
    'CustomValueError', 'CustomIndexError', 'CustomKeyError', 'CustomRuntimeError',

    'ShapeMismatchError',
    'NonFiniteError',
    'SingularMetricError',
    'CGBreakdownError',
    'ConfigError',
    'TrainingDivergedError',
    'CheckpointError',

    'CGNotConvergedWarning',
    'GeometryNotSimplifiedWarning'
]

FuncExceptT = str | Callable[..., Any] | type | None
"""Anything whose name can prefix an error message."""


def _func_name(func: FuncExceptT) -> str | None:
    if func is None:
        return None

    if isinstance(func, str):
        return func

    qualname = getattr(func, '__qualname__', None)

    if qualname is None:
        return type(func).__qualname__

    return str(qualname)


class CustomError(Exception):
    """
    Base of every error raised by this package.

    The message is formatted with the keyword arguments, then prefixed by the name of ``func``.

    :param message:     Error message. ``str.format`` placeholders are filled from ``kwargs``.
    :param func:        Function, class or name the error originates from.
    :param reason:      Optional detail appended in parentheses.
    """

    def __init__(
        self, message: str | None = None, func: FuncExceptT = None, reason: Any = None, **kwargs: Any
    ) -> None:
        self.raw_message = message
        self.func = func
        self.reason = reason
        self.kwargs = kwargs

        super().__init__(self._render())

    def _render(self) -> str:
        message = self.raw_message or 'An error occurred!'

        if self.kwargs:
            message = message.format(**self.kwargs)

        name = _func_name(self.func)

        if name:
            message = f'({name}) {message}'

        if self.reason is not None:
            message = f'{message} ({self.reason})'

        return message

    def __str__(self) -> str:
        return self._render()


class CustomValueError(CustomError, ValueError):
    """Thrown when a specified value is invalid."""


class CustomIndexError(CustomError, IndexError):
    """Thrown when an index or other value is out of bound."""


class CustomKeyError(CustomError, KeyError):
    """Thrown when trying to access a non-existent key."""


class CustomRuntimeError(CustomError, RuntimeError):
    """Thrown when a runtime error occurs."""


class ShapeMismatchError(CustomValueError):
    """Thrown when array shapes do not conform for an operation."""


class NonFiniteError(CustomError, ArithmeticError):
    """Thrown when a NaN or infinity is supplied or produced."""


class SingularMetricError(CustomRuntimeError):
    """
    Thrown when a metric (or any SPD input) fails its Cholesky factorization.

    :param t:   Integration time at which the failure happened, if raised by a geodesic integration.
    """

    def __init__(
        self, message: str | None = None, func: FuncExceptT = None, reason: Any = None,
        *, t: float | None = None, **kwargs: Any
    ) -> None:
        self.t = t

        if t is not None:
            reason = f't={t!r}' if reason is None else f'{reason}, t={t!r}'

        super().__init__(message, func, reason, **kwargs)


class CGBreakdownError(CustomRuntimeError):
    """Thrown when conjugate gradient meets a non-positive curvature direction."""


class ConfigError(CustomValueError):
    """Thrown when a training configuration is malformed or out of range."""


class TrainingDivergedError(CustomRuntimeError):
    """
    Thrown when a training step produces a non-finite loss.

    :param component:   Name of the first non-finite loss component.
    :param step:        Step at which training diverged.
    """

    def __init__(
        self, message: str | None = None, func: FuncExceptT = None, reason: Any = None,
        *, component: str, step: int | None = None, **kwargs: Any
    ) -> None:
        self.component = component
        self.step = step

        super().__init__(message, func, reason, component=component, step=step, **kwargs)


class CheckpointError(CustomValueError):
    """Thrown when a checkpoint document can't be read back."""


class CGNotConvergedWarning(RuntimeWarning):
    """Conjugate gradient reached its iteration cap before the residual tolerance."""


class GeometryNotSimplifiedWarning(UserWarning):
    """A run with geometric regularization ended with a larger geometric loss than it started with."""
