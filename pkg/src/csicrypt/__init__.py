"""Channel-state encryption against Wi-Fi sensing eavesdroppers, simulated in numpy."""
__version__ = "0.1.0"
