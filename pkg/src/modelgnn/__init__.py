"""Taylor-structured edge GNNs for multi-user MISO precoding, with baselines and a WMMSE oracle."""

__version__ = "0.1.0"
