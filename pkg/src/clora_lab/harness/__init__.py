"""Runnable surface: configs, synthetic data, checkpoints, CSV reports and the CLI."""
