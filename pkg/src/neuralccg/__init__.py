"""Two-stage stochastic unit commitment: extensive form, CCG and Neural CCG."""

__version__ = "0.1.0"
