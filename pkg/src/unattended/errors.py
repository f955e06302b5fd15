"""Exception hierarchy shared by every subsystem."""


class UnattendedError(Exception):
    """Base class; the CLI maps any subclass to exit status 1."""


# flash bus
class UnsupportedCommand(UnattendedError):
    pass


class EmptyFrame(UnattendedError):
    pass


class MalformedCommand(UnattendedError):
    pass


class DumpAborted(UnattendedError):
    def __init__(self, message, coverage=0, transcript=None):
        super().__init__(message)
        self.coverage = coverage
        self.transcript = transcript


class NothingToReconstruct(UnattendedError):
    pass


# jtag
class NoDevice(UnattendedError):
    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class InvalidIdcode(NoDevice):
    pass


class NotConnected(UnattendedError):
    pass


# pinout
class AmbiguousSignal(UnattendedError):
    def __init__(self, signal, pins=()):
        super().__init__(f"signal {signal} shorted to several pins: {', '.join(pins)}")
        self.signal = signal
        self.pins = tuple(pins)


class ConflictingPin(UnattendedError):
    def __init__(self, pin, signals=()):
        super().__init__(f"pin {pin} shorted to several signals: {', '.join(signals)}")
        self.pin = pin
        self.signals = tuple(signals)


class InvalidMatrix(UnattendedError):
    pass


# carving
class WindowTooLarge(UnattendedError):
    pass


class RegionOutOfBounds(UnattendedError):
    pass


# secret pipeline
class NoDerivation(UnattendedError):
    pass


class NotBlockAligned(UnattendedError):
    pass


class NotZlib(UnattendedError):
    pass


class CorruptStream(UnattendedError):
    pass


class TextinessError(UnattendedError):
    pass


# case file
class PersistError(UnattendedError):
    pass


class DuplicateRecord(UnattendedError):
    pass


class NothingToReport(UnattendedError):
    pass
