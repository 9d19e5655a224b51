"""fairwatch - prediction-sensitivity audits for counterfactual fairness."""

__version__ = "0.1.0"
