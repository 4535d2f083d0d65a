from __future__ import annotations

from enum import StrEnum
from typing import Self, TypeAlias

import numpy as np
from numpy.typing import NDArray

from .exceptions import CustomValueError, FuncExceptT

__all__ = [
    'FloatArray', 'IntArray',
    'CustomStrEnum'
]

FloatArray: TypeAlias = NDArray[np.float64]
IntArray: TypeAlias = NDArray[np.int64]


class CustomStrEnum(StrEnum):
    """String enum with lenient parsing of user-supplied names."""

    @classmethod
    def from_param(cls, value: str | Self, func_except: FuncExceptT = None) -> Self:
        """
        Resolve a member from its value, its name, or a member.

        :param value:           Value to resolve. Dashes and case are ignored.
        :param func_except:     Function reported when the name is unknown.

        :return:                Matching member.
        """

        if isinstance(value, cls):
            return value

        key = str(value).strip().lower().replace('-', '_')

        for member in cls:
            if key in (member.value.lower(), member.name.lower()):
                return member

        raise CustomValueError(
            'Unknown {kind} "{value}"! Expected one of: {choices}', func_except or cls,
            kind=cls.__name__, value=value, choices=', '.join(m.value for m in cls)
        )
