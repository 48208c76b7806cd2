"""adaptvm: a register VM with plug-in profiling, a plug-in optimizer, and hot code replacement."""
from .ir import parse_transport
from .loader import LoadDeferred, load_extension, load_module
from .system import RunConfig, System, build_system
from .vm import VM, VMTrap

__version__ = "0.1.0"

__all__ = ["LoadDeferred", "RunConfig", "System", "VM", "VMTrap", "build_system", "load_extension", "load_module",
           "parse_transport"]
