"""Training orchestration, evaluation, metrics and the command-line interface."""
