"""Exception types raised across the package."""


class CrowdlensError(Exception):
    """Base class for all crowdlens errors."""


# ---------------------------------------------------------------- ingest

class MalformedRow(CrowdlensError):
    def __init__(self, path, line_no, column, message):
        self.path = str(path)
        self.line_no = line_no
        self.column = column
        super().__init__(f"{path}:{line_no} column '{column}': {message}")


class UnknownProject(CrowdlensError):
    def __init__(self, project_id, path=None, line_no=None):
        self.project_id = project_id
        loc = f" ({path}:{line_no})" if path else ""
        super().__init__(f"contribution references unknown project '{project_id}'{loc}")


class SchemaMismatch(CrowdlensError):
    def __init__(self, column, message):
        self.column = column
        super().__init__(f"column '{column}': {message}")


class TemporalViolation(CrowdlensError):
    pass


# ---------------------------------------------------------------- features

class EmptyEventStream(CrowdlensError):
    pass


class NonPositiveWindow(CrowdlensError):
    pass


# ---------------------------------------------------------------- stats

class ConstantInput(CrowdlensError):
    pass


class LengthMismatch(CrowdlensError):
    pass


class TooFewPoints(CrowdlensError):
    pass


class DegenerateConstant(CrowdlensError):
    pass


# ---------------------------------------------------------------- predict

class SingleClass(CrowdlensError):
    pass


class EmptyMatrix(CrowdlensError):
    pass


class UnknownColumn(CrowdlensError):
    pass


# ---------------------------------------------------------------- cem

class UnknownCovariate(CrowdlensError):
    pass


class EmptyData(CrowdlensError):
    pass


class NoCommonSupport(CrowdlensError):
    pass


class NoTreatmentVariation(CrowdlensError):
    pass


class SeparationDetected(CrowdlensError):
    """Unpenalized logistic fit failed to converge (quasi-separation)."""


# ---------------------------------------------------------------- synth

class InvalidSpec(CrowdlensError):
    pass
