"""Exception hierarchy.

Two families: :class:`StatisticalError` for inputs that make a statistic or
test undefined (CLI exit code 2), and :class:`InputError` for files that
cannot be read as item-response tables (CLI exit code 1).
"""


class RelicmpError(Exception):
    exit_code = 2

    @property
    def code(self):
        return type(self).__name__


class StatisticalError(RelicmpError, ValueError):
    exit_code = 2


class DegenerateInput(StatisticalError):
    pass


class ZeroTotalVariance(StatisticalError):
    pass


class ZeroVariance(StatisticalError):
    pass


class NonSymmetric(StatisticalError):
    pass


class NotPSD(StatisticalError):
    pass


class SingularGradient(StatisticalError):
    pass


class UnequalItemCounts(StatisticalError):
    pass


class MissingSplit(StatisticalError):
    pass


class MissingErrorVariances(StatisticalError):
    pass


class CapExceeded(StatisticalError):
    pass


class UnsortedThresholds(StatisticalError):
    pass


class InputError(RelicmpError):
    exit_code = 1


class ParseError(InputError):
    pass


class MissingData(InputError):
    def __init__(self, cells, path=None):
        self.cells = list(cells)
        shown = ", ".join(f"(row {r}, col {c})" for r, c in self.cells[:20])
        more = "" if len(self.cells) <= 20 else f" and {len(self.cells) - 20} more"
        where = f"{path}: " if path else ""
        super().__init__(f"{where}missing values at {shown}{more}")


class NonRectangular(InputError):
    pass
