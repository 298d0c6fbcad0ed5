"""Self-supervised ViT pretraining and multi-label defect classification at desk scale."""

__version__ = "0.1.0"
