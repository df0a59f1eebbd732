"""Python access to the discrete-velocity kinetic traffic model."""

import json as _json

from ._ktraffic import (  # noqa: F401
    ConfigError,
    ConvergenceError,
    IoError,
    NumericalError,
    Tensor,
    build_tensor,
    capacity_drop,
    closed_form_equilibrium,
    equilibrium_on_grid,
    fundamental_diagram,
    grid_centers,
    infinite_r_diagram,
    integrate,
    rhs,
    steady_state,
    unstable_equilibrium,
    __version__,
)
from ._ktraffic import _run_command


def run(command, config):
    """Run a CLI subcommand from a config dict; returns the manifest as a dict."""
    return _json.loads(_run_command(command, _json.dumps(config)))
