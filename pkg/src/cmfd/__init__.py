"""Keypoint-based copy-move forgery detection with joint clustering, matching and affine estimation."""

__version__ = "0.1.0"
