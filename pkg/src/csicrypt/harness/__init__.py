"""Experiment orchestration: reference world, attacks, sweeps and reports."""
