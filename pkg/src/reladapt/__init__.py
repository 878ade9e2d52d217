"""reladapt: learn a target task from a source-task demonstration plus a
natural-language description of how the two tasks differ."""

__version__ = "0.1.0"
