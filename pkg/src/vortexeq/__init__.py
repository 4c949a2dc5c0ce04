"""Point-vortex equilibria of vortex-type Hamiltonians on closed surfaces."""

from .errors import *  # noqa: F401,F403
from .fields import *  # noqa: F401,F403
from .geometry import *  # noqa: F401,F403
from .green import *  # noqa: F401,F403
from .hamiltonian import *  # noqa: F401,F403
from .vorticity import *  # noqa: F401,F403
from .search import *  # noqa: F401,F403
from .special import *  # noqa: F401,F403
from .dynamics import *  # noqa: F401,F403

__version__ = "0.1.0"
