"""Early-warning models for corporate financial distress with AI-disclosure
features: panel assembly, pruned-training-window evaluation, paired
inference, and additive explanations."""

__version__ = "0.1.0"
