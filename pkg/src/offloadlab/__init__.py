"""Online binary computation offloading in wireless-powered MEC networks.

Submodules: ``env`` (system model), ``solver`` (per-decision resource
allocation), ``qsim`` (statevector circuits), ``nn`` (layers, Adam,
checkpoints), ``policies``, ``quantize``, ``trainer`` and ``bench``.
"""
__version__ = "0.1.0"
