"""Exception hierarchy shared by the package.

The CLI maps ``ConfigError`` to exit code 2, ``DataError`` to 3 and any
other ``SabrError`` to 4.
"""


class SabrError(Exception):
    pass


class ConfigError(SabrError, ValueError):
    pass


class DataError(SabrError, ValueError):
    pass


class SimulationError(SabrError, RuntimeError):
    pass
