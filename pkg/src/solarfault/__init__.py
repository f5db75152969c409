"""Fault detection for domestic solar thermal systems.

Learns probabilistic reconstructions of nominal day traces (an
LSTM-based VAE with a heteroscedastic Gaussian output) and scores days
by negative log-likelihood, alongside PCA-reconstruction baselines and
a full evaluation suite.
"""

__version__ = "0.1.0"
