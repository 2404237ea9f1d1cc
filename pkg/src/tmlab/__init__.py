"""tmlab: a desk-scale finite-element laboratory for a sharp mean-value-zero
Moser–Trudinger-type inequality on compact surfaces with boundary."""

__version__ = "0.1.0"
