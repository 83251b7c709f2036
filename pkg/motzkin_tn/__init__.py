"""
motzkin_tn package initializer
"""

__all__ = [
    "errors",
    "tensor",
    "motzkin",
    "mps",
    "factored",
    "baseline",
    "config",
    "train",
    "presets",
    "datafile",
    "records",
    "outliers",
    "checkpoint",
    "cli",
]
