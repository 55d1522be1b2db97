"""Multimodal (static + irregular MTS) classifiers, feature selection and interpretability."""

__version__ = "0.1.0"
