"""Recompute planning for training graphs."""

from ._core import CapExceeded, analyze, build_model, compare, export_dot, model_names, verify

__all__ = ["CapExceeded", "analyze", "build_model", "compare", "export_dot", "model_names", "verify"]
