"""Differential LSTM forecasting: data pipeline, model and benchmark harness."""

__version__ = "0.1.0"
