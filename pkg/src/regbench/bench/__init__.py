"""Benchmark harness: configuration, runs, synthetic sweeps and reports."""
