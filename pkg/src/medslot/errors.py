"""Exception hierarchy shared by all medslot modules."""


class MedslotError(Exception):
    """Base class for data-level errors (bad files, bad offsets, ...)."""


class MalformedEntry(MedslotError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class OffsetOrderError(MedslotError):
    pass


class OffsetOutOfRange(MedslotError):
    pass


class LinearizationError(MedslotError):
    pass


class DanglingJoiner(MedslotError):
    pass


class ShapeMismatch(MedslotError, ValueError):
    pass


class IndexOutOfVocab(MedslotError, IndexError):
    pass


class NonScalarLoss(MedslotError, ValueError):
    pass


class NonFiniteGradient(MedslotError, FloatingPointError):
    pass


class NonFiniteLoss(MedslotError, FloatingPointError):
    pass


class EmptySource(MedslotError, ValueError):
    pass


class EmptyPairedSet(MedslotError, ValueError):
    pass


class VersionMismatch(MedslotError):
    pass


class CorruptCheckpoint(MedslotError):
    pass


class AlignmentError(MedslotError):
    def __init__(self, missing_pred, missing_ref):
        self.missing_pred = sorted(missing_pred)
        self.missing_ref = sorted(missing_ref)
        super().__init__(
            f"unaligned keys: {len(self.missing_pred)} references without prediction "
            f"{self.missing_pred[:5]}, {len(self.missing_ref)} predictions without "
            f"reference {self.missing_ref[:5]}"
        )


class DivergedTraining(Exception):
    """Training loss became non-finite."""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
