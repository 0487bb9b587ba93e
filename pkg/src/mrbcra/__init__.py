"""Compressive random access with multiple resource blocks and fast retrial.

Modules
-------
config    system parameters, config files, deterministic random streams
analysis  closed-form stability bounds and Poisson steady-state solver
csmud     signal synthesis and S-OMP multiuser detection
sim       slot-level MRB-CRA and multichannel ALOHA simulators
cli       scenario runner (``python -m mrbcra``)
"""

__version__ = "0.1.0"

from .config import InvalidConfig, SystemConfig, derive_stream, load_config, save_config, validate_config  # noqa: E402
