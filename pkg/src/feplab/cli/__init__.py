"""Experiment harness behind the ``feplab`` command."""
