"""Experiment harness: configuration, runners, reports and the ``vam`` CLI."""
