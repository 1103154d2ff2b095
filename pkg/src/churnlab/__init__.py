"""Churn prediction on player telemetry: labeling, features, recurrent and
baseline classifiers, and a cross-validated comparison harness."""

__version__ = "0.1.0"
