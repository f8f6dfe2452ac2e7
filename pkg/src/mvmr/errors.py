"""Exception types shared across the package."""


class MvmrError(Exception):
    """Base class for all package-specific errors."""


class GraphStructureError(MvmrError, ValueError):
    """Invalid causal diagram (cycles, self loops, duplicate nodes/edges)."""


class UnknownNodeError(MvmrError, LookupError):
    """A node name was not found in the diagram."""


class PathEnumerationError(MvmrError, RuntimeError):
    """Path enumeration refused: diagram exceeds the configured node cap."""


class StandardizationError(MvmrError, ValueError):
    """Standardized mode requested but implied variances are not unit."""


class CombinatorialLimitError(MvmrError, RuntimeError):
    """Instrumental-set relabeling search exceeds the supported set size."""


class UnderdeterminedError(MvmrError, ValueError):
    """Instrument-exposure covariance matrix is rank deficient: the causal
    effects are not identifiable from these inputs.  The rank/determinant
    diagnostics carried by the exception describe the failure."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class IllConditionedLdError(MvmrError, ValueError):
    """Instrument LD matrix is numerically singular (near-duplicate SNPs)."""


class WeakInstrumentError(MvmrError, ValueError):
    """Instrument-exposure covariance too small for a ratio estimate."""


class CollinearExposuresError(MvmrError, ValueError):
    """Exposure columns are collinear; conditioning regression impossible."""


class FeasibilityError(MvmrError, ValueError):
    """Requested MAF / correlation combination cannot be realised by the
    allele-level Markov sampler (conditional allele probability outside
    [0, 1])."""


class ScenarioError(MvmrError, ValueError):
    """Malformed or inconsistent simulation scenario."""


class SummaryFormatError(MvmrError, ValueError):
    """Malformed eQTL/GWAS/LD summary file."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc = f" [{loc}]"
        super().__init__(f"{message}{loc}")
        self.path = path
        self.line = line
