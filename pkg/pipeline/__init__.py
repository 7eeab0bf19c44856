"""Training, evaluation, experiments and reporting."""
