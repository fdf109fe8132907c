"""
EGM Rank
~~~~~~~~

Singular value analysis of multichannel atrial electrograms, with the
forward model used to validate it.

:copyright: (c) 2026-present the py-egmrank authors.
:license: MIT, see LICENSE for more details.
"""
import logging

from .config import *
from .dataio import *
from .errors import *
from .latmap import *
from .leadfield import *
from .sigmamap import *
from .simulation import *
from .spectral import *
from .stats import *
from .svdcore import *
from .wavefront import *

__title__ = "py-egmrank"
__author__ = "py-egmrank authors"
__license__ = "MIT"
__copyright__ = "Copyright 2026-present the py-egmrank authors"
__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
