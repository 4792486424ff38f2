# -*- coding: utf-8 -*-
"""Exceptions raised by the package.

All of them derive from `DsdError`. They also derive from the builtin type a
caller would naturally catch (ValueError, IOError, ...), so code written
against plain builtins keeps working.
"""


class DsdError(Exception):
    """Base class of all package errors."""


class ContractViolation(DsdError, ValueError):
    """An argument violates a shape, range or normalization contract."""


class ConfigError(DsdError, ValueError):
    """A configuration value or file is invalid.

    Parameters:
    * message: str, human readable description
    * field: str, dotted path of the offending field, e.g. "optimizer.learning_rate"
    * line: int, line number in the config file (JSON syntax errors only)
    * column: int, column number in the config file (JSON syntax errors only)
    """
    def __init__(self, message, field=None, line=None, column=None):
        self.field = field
        self.line = line
        self.column = column
        where = []
        if field is not None:
            where.append("field '%s'" % field)
        if line is not None:
            where.append("line %d, column %d" % (line, column or 0))
        if where:
            message = "%s (%s)" % (message, ", ".join(where))
        super(ConfigError, self).__init__(message)


class ManifestError(DsdError, ValueError):
    """A dataset manifest is malformed or its splits overlap."""


class VolumeFormatError(DsdError, IOError):
    """A volume file cannot be decoded."""


class BadMagicError(VolumeFormatError):
    """The file does not start with the volume magic bytes."""


class TruncatedPayloadError(VolumeFormatError):
    """The header or the payload ends before the declared size."""


class UnknownDtypeError(VolumeFormatError):
    """The header declares a dtype code this reader does not know."""


class InvalidHeaderError(VolumeFormatError):
    """The header is readable but describes an invalid array."""


class NonFiniteLossError(DsdError, FloatingPointError):
    """Training produced a NaN or infinite loss.

    Parameters:
    * message: str
    * terms: dict, per-term loss values of the offending batch
    * dump_path: str, path of the diagnostic dump written before raising
    """
    def __init__(self, message, terms=None, dump_path=None):
        self.terms = terms or {}
        self.dump_path = dump_path
        super(NonFiniteLossError, self).__init__(message)
