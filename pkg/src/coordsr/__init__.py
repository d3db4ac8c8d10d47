"""Scale-agnostic super-resolution for MR-like images.

Subpackages: `autodiff` (tensors + reverse-mode gradients), `resample`
(bicubic and ensemble-weight geometry), `mrisim` (k-space simulation and
phantoms), `models` (encoder/decoders), `denoise`, `trainer`, `metrics`,
`cli`, and `study_service` (reader-study HTTP service).
"""

__version__ = "0.1.0"
