# holoflow/errors.py
"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from typing import Optional


class HoloflowError(Exception):
    exit_code = 2


# ---------- usage / input ----------

class ConfigError(HoloflowError):
    exit_code = 1


class FieldSyntaxError(HoloflowError, SyntaxError):
    """Malformed field expression. `offset` is the byte offset of the offending token."""
    exit_code = 1

    def __init__(self, msg: str, offset: int, source: str = ""):
        super().__init__(f"{msg} at offset {offset}")
        self.reason = msg
        self.offset = offset
        self.source = source


class UnknownIdentifier(HoloflowError):
    exit_code = 1

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


# ---------- numerical failures ----------

class DivisionByZero(HoloflowError):
    pass


class WindingMismatch(HoloflowError):
    def __init__(self, found: int, counted: int):
        super().__init__(f"polished zeros give multiplicity {found}, contour count is {counted}")
        self.found = found
        self.counted = counted


class NonConvergence(HoloflowError):
    pass


class OrderOverflow(HoloflowError):
    pass


class NotACenter(HoloflowError):
    pass


class NotMultiple(HoloflowError):
    pass


class StartAtEquilibrium(HoloflowError):
    pass


class NotTransversal(HoloflowError):
    pass


class OutOfSpan(HoloflowError):
    pass


class PoleProximity(HoloflowError):
    def __init__(self, msg: str, where: Optional[complex] = None):
        super().__init__(msg)
        self.where = where


class NotEscaping(HoloflowError):
    pass


class EmptyBoundary(HoloflowError):
    pass


class MalformedComponent(HoloflowError):
    pass


class SectorSeedFailure(HoloflowError):
    pass


class NumericalOverflow(HoloflowError):
    """Floating-point overflow that escaped the numerical guards."""
