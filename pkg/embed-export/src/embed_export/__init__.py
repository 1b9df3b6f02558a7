"""Offline sliding-window embedding exporter for audio moment retrieval pipelines."""

from .export import ExportJob, export_audio, export_text

__version__ = "0.1.0"

__all__ = ["ExportJob", "export_audio", "export_text", "__version__"]
