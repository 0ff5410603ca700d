"""Day-ahead co-optimization of data-center computing and a radial grid."""

__version__ = "0.1.0"
