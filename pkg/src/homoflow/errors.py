"""Exception hierarchy shared by every homoflow module."""


class HomoflowError(Exception):
    pass


class DegenerateProjection(HomoflowError):
    """Homogeneous w-component vanished when projecting a point."""


class DegenerateConfiguration(HomoflowError):
    """Point correspondences do not determine a homography."""


class Singular(HomoflowError):
    pass


class TooFewFeatures(HomoflowError):
    pass


class NoConsensus(HomoflowError):
    pass


class EmptyTrack(HomoflowError):
    pass


class EmptyDataset(HomoflowError):
    pass


class EmptySet(HomoflowError):
    pass


class NoCandidates(HomoflowError):
    pass


class ParameterOutOfRange(HomoflowError, ValueError):
    pass


class MissingHistory(HomoflowError):
    pass


class DimensionMismatch(HomoflowError, ValueError):
    pass


class LabelMismatch(HomoflowError):
    pass


class ViewportEscape(HomoflowError):
    pass
