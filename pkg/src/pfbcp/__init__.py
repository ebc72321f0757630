"""Fourier-pseudospectral IEQ solvers for the phase-field block copolymer model."""
from .model import BcpState, ModelParams, NsState
from .scheme_bcp import advance, step_bdf2, step_cn, step_cn_electric, step_first_order
from .scheme_ns import step_ns
from .spectral import Grid2D

__all__ = ["BcpState", "Grid2D", "ModelParams", "NsState", "advance", "step_bdf2", "step_cn",
           "step_cn_electric", "step_first_order", "step_ns"]
__version__ = "0.1.0"
