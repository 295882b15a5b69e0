"""Wind-directed process-convolution Gaussian process models."""
__version__ = "0.1.0"
