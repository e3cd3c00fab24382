"""Link-level simulation of OTFS with faster-than-Nyquist pulse packing."""

__version__ = "0.1.0"
