"""Experiment harness: configs, runs, comparison tables and charts."""
