"""Desk-scale Fock-space realization of the excitation and Bogoliubov apparatus."""

from .bogoliubov import *  # noqa: F401,F403
from .modes import ModeBasis  # noqa: F401
from .space import *  # noqa: F401,F403
from .dynamics import *  # noqa: F401,F403
from .report import *  # noqa: F401,F403
