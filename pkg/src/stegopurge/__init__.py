"""Steganography purification: embedders, classical and neural purifiers, metrics."""

from .imageio import read_image, write_image
from .metrics import ber, mse, psnr, ssim, uqi
from .stego import adaptive_embed, lsb_embed, lsb_extract

__version__ = "0.1.0"

__all__ = ["adaptive_embed", "ber", "lsb_embed", "lsb_extract", "mse", "psnr", "read_image",
           "ssim", "uqi", "write_image"]
