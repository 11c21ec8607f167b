"""
negmm: input-dependent Gaussian mixture regression trained with a hybrid
of the log score and the closed-form energy score
"""

__version__ = "0.1.0"
