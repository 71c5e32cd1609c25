"""Exception hierarchy shared by every stage of the pipeline."""


class MolFusionError(Exception):
    """Base class for all errors raised by molfusion."""


# --- SMILES -----------------------------------------------------------------

class SmilesError(MolFusionError, ValueError):
    pass


class EmptyInput(SmilesError):
    pass


class UntokenizableCharacter(SmilesError):
    def __init__(self, smiles, position):
        self.smiles = smiles
        self.position = position
        super().__init__(
            f"cannot tokenize {smiles[position]!r} at position {position} in {smiles!r}"
        )


class UnbalancedParentheses(SmilesError):
    pass


class UnclosedRingBond(SmilesError):
    def __init__(self, digit):
        self.digit = digit
        super().__init__(f"ring bond {digit} opened but never closed")


class UnknownAtomSymbol(SmilesError):
    pass


class InvalidBracketAtom(SmilesError):
    pass


class IndexOutOfRange(MolFusionError, IndexError):
    pass


# --- scaffold split ---------------------------------------------------------

class DegenerateSplit(MolFusionError):
    pass


# --- encoders / fusion ------------------------------------------------------

class EmptyGraph(MolFusionError, ValueError):
    pass


class EmptyCorpus(MolFusionError, ValueError):
    pass


class EmptyTokenList(MolFusionError, ValueError):
    pass


class SequenceTooLong(MolFusionError, ValueError):
    def __init__(self, length, limit):
        self.length = length
        self.limit = limit
        super().__init__(f"sequence of {length} tokens exceeds the limit of {limit}")


class AllKeysMasked(MolFusionError, ValueError):
    pass


class DimensionMismatch(MolFusionError, ValueError):
    pass


class RowCountMismatch(MolFusionError, ValueError):
    pass


# --- predictor / search / metrics -------------------------------------------

class SingleClassTraining(MolFusionError, ValueError):
    pass


class EmptyMatrix(MolFusionError, ValueError):
    pass


class NoCompleteTrials(MolFusionError):
    pass


class SingleClass(MolFusionError, ValueError):
    pass


class NoValidTask(MolFusionError, ValueError):
    pass


# --- files ------------------------------------------------------------------

class MissingColumn(MolFusionError, KeyError):
    pass


class NonBinaryLabel(MolFusionError, ValueError):
    def __init__(self, row, col, value):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"row {row}, column {col!r}: label {value!r} is not 0/1")


class MalformedCsv(MolFusionError, ValueError):
    pass


class CacheFormatError(MolFusionError, ValueError):
    pass


class BadMagic(CacheFormatError):
    pass


class VersionMismatch(CacheFormatError):
    pass


class TruncatedFile(CacheFormatError):
    pass


class DimensionHeaderMismatch(CacheFormatError):
    pass


class NonFiniteEmbedding(MolFusionError, ValueError):
    def __init__(self, row, col):
        self.row = row
        self.col = col
        super().__init__(f"non-finite embedding value at row {row}, column {col}")


class StageError(MolFusionError):
    """Wraps an error with the pipeline stage (and row, if any) it came from."""

    def __init__(self, stage, cause, row=None):
        self.stage = stage
        self.cause = cause
        self.row = row
        where = f"[{stage}]" if row is None else f"[{stage}] row {row}:"
        super().__init__(f"{where} {type(cause).__name__}: {cause}")
