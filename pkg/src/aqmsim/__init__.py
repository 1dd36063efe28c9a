"""Discrete-event simulator for TCP congestion control competition under
AQM-managed bottleneck links, with a scenario harness, metrics pipeline,
and a run-control streaming service."""

__version__ = "0.1.0"
