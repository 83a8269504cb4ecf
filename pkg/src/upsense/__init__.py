"""upsense - Uplink OFDM sensing with asynchronous transceivers."""

__version__ = "0.1.0"
