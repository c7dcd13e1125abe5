"""CE-VAE underwater image enhancement: Python bindings over the C++ core."""

try:
    from ._core import (
        CevaeError,
        Model,
        compression_report,
        deserialize_latent,
        presets,
        psnr,
        serialize_latent,
        ssim,
    )
except ImportError:  # in-tree builds put _core next to this package
    from _core import (  # type: ignore
        CevaeError,
        Model,
        compression_report,
        deserialize_latent,
        presets,
        psnr,
        serialize_latent,
        ssim,
    )

__all__ = [
    "CevaeError",
    "Model",
    "compression_report",
    "deserialize_latent",
    "presets",
    "psnr",
    "serialize_latent",
    "ssim",
]
