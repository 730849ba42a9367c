"""
Experiment harness: method registry, metrics, sweeps, bootstrap summaries
and result files, driven by the `run_experiments` command line.
"""
