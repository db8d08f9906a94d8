"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the CLI when it
prints ``error_code: message`` on failure.
"""


class HybridCLError(ValueError):
    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class ZeroRow(HybridCLError):
    code = "zero_row"


class DimMismatch(HybridCLError):
    code = "dim_mismatch"


class EmptyList(HybridCLError):
    code = "empty_list"


class GammaOutOfRange(HybridCLError):
    code = "gamma_out_of_range"


class IndexOutOfRange(HybridCLError):
    code = "index_out_of_range"


class DuplicateIndex(HybridCLError):
    code = "duplicate_index"


class LengthMismatch(HybridCLError):
    code = "length_mismatch"


class NoClusters(HybridCLError):
    code = "no_clusters"


class AllAnchorsNoise(HybridCLError):
    code = "all_anchors_noise"


class AllAnchorsIsolated(HybridCLError):
    code = "all_anchors_isolated"


class NoCachedForward(HybridCLError):
    code = "no_cached_forward"


class ShapeMismatch(HybridCLError):
    code = "shape_mismatch"


class DegenerateClustering(HybridCLError):
    code = "degenerate_clustering"


class NoRelevant(HybridCLError):
    code = "no_relevant"


class NoValidQueries(HybridCLError):
    code = "no_valid_queries"


class ConfigInvalid(HybridCLError):
    code = "config_invalid"


class FormatError(HybridCLError):
    code = "format_error"

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")
