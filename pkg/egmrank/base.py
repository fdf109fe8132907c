class EgmRankObject:
    """
    The base class for an egmrank class.
    """

    pass


class ConstantsObject(EgmRankObject):
    """
    Base class for `constants` module.
    """

    pass


class SimulationObject(EgmRankObject):
    """
    Base class for `simulation` module.
    """

    pass


class LeadfieldObject(EgmRankObject):
    """
    Base class for `leadfield` module.
    """

    pass


class SpectralObject(EgmRankObject):
    """
    Base class for `spectral` module.
    """

    pass


class SVDObject(EgmRankObject):
    """
    Base class for `svdcore` module.
    """

    pass


class WavefrontObject(EgmRankObject):
    """
    Base class for `wavefront` module.
    """

    pass


class SigmaMapObject(EgmRankObject):
    """
    Base class for `sigmamap` module.
    """

    pass


class LatMapObject(EgmRankObject):
    """
    Base class for `latmap` module.
    """

    pass


class StatsObject(EgmRankObject):
    """
    Base class for `stats` module.
    """

    pass


class DataIOObject(EgmRankObject):
    """
    Base class for `dataio` module.
    """

    pass
