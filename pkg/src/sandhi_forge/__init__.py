"""Sanskrit sandhi splitting toolkit built around a double-decoder attentional LSTM."""

__version__ = "0.1.0"
