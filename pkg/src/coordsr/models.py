"""Encoder and decoders.

The encoder is an EDSR-style residual CNN mapping a low-resolution image to
a same-size latent feature grid (one length-d code per input pixel). The
coordinate decoder is an MLP evaluated on latent codes; continuous queries
blend the MLP outputs of the four surrounding cells with bilinear ensemble
weights, so a single trained model can be rendered at any output dims. The
convolutional decoder is the fixed-scale pixel-shuffle baseline.

Because the MLP sees only the latent code of a cell (default mode), its
per-cell outputs are query-independent; `decode_image` exploits that by
evaluating each cell once and blending. The optional LIIF-style mode
additionally feeds each neighbor's (dx, dy) offset to the MLP, which makes
outputs query-dependent and costs four MLP passes per query set.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DomainError, NonFiniteError, UsageError
from .ft1 import read_ft1, write_ft1
from .resample import ensemble_weights, ensemble_weights_grid, output_grid_coords

RES_SCALE = 0.1  # residual branch scaling, standard EDSR practice
CONV_SCALES = (2, 3, 4)


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(ad.default_dtype())


def _conv_param(rng, cout, cin, k=3):
    w = ad.Tensor(_kaiming_uniform(rng, (cout, cin, k, k), cin * k * k), requires_grad=True)
    b = ad.Tensor(np.zeros(cout, dtype=ad.default_dtype()), requires_grad=True)
    return w, b


def _linear_param(rng, out_f, in_f):
    w = ad.Tensor(_kaiming_uniform(rng, (out_f, in_f), in_f), requires_grad=True)
    b = ad.Tensor(np.zeros(out_f, dtype=ad.default_dtype()), requires_grad=True)
    return w, b


def _finite(t: ad.Tensor, where: str) -> ad.Tensor:
    # sum() is non-finite iff any element is NaN/Inf; cheaper than isfinite(all)
    if not np.isfinite(float(t.data.sum())):
        raise NonFiniteError(f"non-finite activations in {where}")
    return t


class Encoder:
    """Head conv -> residual blocks -> tail conv, all 3x3 same-padded.

    Output spatial dims equal input dims so the feature grid stays aligned
    with the low-resolution pixel grid. Perturbing one input pixel can only
    influence features within radius 2 * blocks + 2.
    """

    def __init__(self, d: int = 64, blocks: int = 8, rng: np.random.Generator | None = None):
        if d < 1 or blocks < 0:
            raise ConfigurationError(f"bad encoder config d={d} blocks={blocks}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.blocks = blocks
        self._p: dict[str, ad.Tensor] = {}
        self._p["head.w"], self._p["head.b"] = _conv_param(rng, d, 1)
        for i in range(blocks):
            self._p[f"block{i}.w1"], self._p[f"block{i}.b1"] = _conv_param(rng, d, d)
            self._p[f"block{i}.w2"], self._p[f"block{i}.b2"] = _conv_param(rng, d, d)
        self._p["tail.w"], self._p["tail.b"] = _conv_param(rng, d, d)

    def params(self) -> dict[str, ad.Tensor]:
        return self._p

    def forward(self, x: ad.Tensor) -> ad.Tensor:
        p = self._p
        f0 = _finite(ad.conv2d(x, p["head.w"], p["head.b"]), "encoder head")
        r = f0
        for i in range(self.blocks):
            branch = ad.relu(ad.conv2d(r, p[f"block{i}.w1"], p[f"block{i}.b1"]))
            branch = ad.conv2d(branch, p[f"block{i}.w2"], p[f"block{i}.b2"])
            r = _finite(ad.add(r, ad.scale(branch, RES_SCALE)), f"encoder block {i}")
        r = ad.add(r, f0)
        return _finite(ad.conv2d(r, p["tail.w"], p["tail.b"]), "encoder tail")


class CoordDecoder:
    """MLP over latent codes: `layers` affine maps with ReLU between them.

    Default is 5 layers with 256 hidden units mapping a length-d code to one
    intensity. With `liif_mode` the input is the code concatenated with the
    query's (dx, dy) offset from the cell center, in cell units.
    """

    def __init__(self, d: int = 64, hidden: int = 256, layers: int = 5,
                 liif_mode: bool = False, rng: np.random.Generator | None = None):
        if layers < 2:
            raise ConfigurationError(f"decoder needs >= 2 affine layers, got {layers}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.hidden = hidden
        self.layers = layers
        self.liif_mode = bool(liif_mode)
        in_f = d + (2 if liif_mode else 0)
        dims = [in_f] + [hidden] * (layers - 1) + [1]
        self._p: dict[str, ad.Tensor] = {}
        for i in range(layers):
            self._p[f"fc{i}.w"], self._p[f"fc{i}.b"] = _linear_param(rng, dims[i + 1], dims[i])

    def params(self) -> dict[str, ad.Tensor]:
        return self._p

    def mlp(self, x: ad.Tensor) -> ad.Tensor:
        """Apply the MLP along the last axis of [rows, in] -> [rows, 1]."""
        for i in range(self.layers):
            x = ad.linear(x, self._p[f"fc{i}.w"], self._p[f"fc{i}.b"])
            if i < self.layers - 1:
                x = ad.relu(x)
        return x

    def cell_values(self, feat: ad.Tensor) -> ad.Tensor:
        """MLP output at every grid cell of a [d, l, w] feature grid -> [l*w]."""
        if self.liif_mode:
            raise UsageError("cell_values is only valid without coordinate inputs")
        d, l, w = feat.shape
        cells = ad.permute(ad.reshape(feat, (d, l * w)), (1, 0))
        return ad.reshape(self.mlp(cells), (l * w,))


class ConvDecoder:
    """Fixed-scale sub-pixel upsampler: conv + pixel-shuffle stages, final conv.

    Scale is baked in at construction ({2, 3, 4}; 4 runs two x2 stages);
    querying any other scale is a usage error by design.
    """

    def __init__(self, d: int = 64, scale: int = 2, rng: np.random.Generator | None = None):
        if scale not in CONV_SCALES:
            raise ConfigurationError(f"conv decoder scale must be one of {CONV_SCALES}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.scale = scale
        self.stages = (2, 2) if scale == 4 else (scale,)
        self._p: dict[str, ad.Tensor] = {}
        for i, r in enumerate(self.stages):
            self._p[f"up{i}.w"], self._p[f"up{i}.b"] = _conv_param(rng, d * r * r, d)
        self._p["out.w"], self._p["out.b"] = _conv_param(rng, 1, d)

    def params(self) -> dict[str, ad.Tensor]:
        return self._p

    def forward(self, feat4: ad.Tensor) -> ad.Tensor:
        x = feat4
        for i, r in enumerate(self.stages):
            x = ad.pixel_shuffle(ad.conv2d(x, self._p[f"up{i}.w"], self._p[f"up{i}.b"]), r)
        return ad.conv2d(x, self._p["out.w"], self._p["out.b"])


# ---------------------------------------------------------------------------
# functional surface


def encode(x_lr, encoder: Encoder) -> ad.Tensor:
    """Map a low-resolution image (>= 8x8) to its [d, l, w] feature grid."""
    if isinstance(x_lr, ad.Tensor):
        x = x_lr
    else:
        x = ad.Tensor(np.asarray(x_lr, dtype=ad.default_dtype()))
    if x.data.ndim != 2:
        raise ConfigurationError(f"encode expects a 2-D image, got shape {x.shape}")
    h, w = x.shape
    if h < 8 or w < 8:
        raise DomainError(f"encoder input must be at least 8x8, got {h}x{w}")
    feat = encoder.forward(ad.reshape(x, (1, 1, h, w)))
    return ad.reshape(feat, (encoder.d, h, w))


def _cells_matrix(feat: ad.Tensor) -> ad.Tensor:
    d, l, w = feat.shape
    return ad.permute(ad.reshape(feat, (d, l * w)), (1, 0))


def decode_point(feat: ad.Tensor, query, decoder: CoordDecoder) -> float:
    """Decode one continuous (x, y) query: 4 neighbor MLP outputs, blended."""
    _, l, w = feat.shape
    ew = ensemble_weights(query, (l, w))
    codes = ad.gather_rows(_cells_matrix(feat), ew.flat_indices(w))
    if decoder.liif_mode:
        x, y = query
        offs = np.stack([
            x * w - 0.5 - ew.neighbor_indices[:, 1],
            y * l - 0.5 - ew.neighbor_indices[:, 0],
        ], axis=1)
        codes = ad.append_const_cols(codes, offs)
    vals = decoder.mlp(codes)
    return float(np.dot(vals.data[:, 0].astype(np.float64), ew.weights))


def decode_image(feat: ad.Tensor, out_dims, decoder: CoordDecoder) -> ad.Tensor:
    """Decode every half-pixel center of an H' x W' output grid.

    Differentiable end to end; the ensemble weights are constants of the
    query geometry, so gradients flow through the MLP values only.
    """
    h, w_out = int(out_dims[0]), int(out_dims[1])
    if h < 1 or w_out < 1:
        raise DomainError(f"output dims must be >= 1, got {out_dims}")
    _, l, w = feat.shape
    xs, ys = output_grid_coords((h, w_out))
    idx, wts = ensemble_weights_grid(xs, ys, (l, w))
    if not decoder.liif_mode:
        values = decoder.cell_values(feat)
        out = ad.ensemble_blend(values, idx, wts)
        return ad.reshape(out, (h, w_out))

    cells = _cells_matrix(feat)
    gx = xs * w - 0.5
    gy = ys * l - 0.5
    total = None
    n = idx.shape[0]
    for k in range(4):
        cols = idx[:, k] % w
        rows = idx[:, k] // w
        codes = ad.gather_rows(cells, idx[:, k])
        offs = np.stack([gx - cols, gy - rows], axis=1)
        vals = ad.reshape(decoder.mlp(ad.append_const_cols(codes, offs)), (n,))
        term = ad.mulc(vals, wts[:, k])
        total = term if total is None else ad.add(total, term)
    return ad.reshape(total, (h, w_out))


def conv_decode(feat: ad.Tensor, scale: int, decoder: ConvDecoder) -> ad.Tensor:
    """Upsample a [d, l, w] feature grid by the decoder's fixed scale."""
    if scale != decoder.scale:
        raise UsageError(
            f"this convolutional decoder was built for {decoder.scale}x, not {scale}x"
        )
    d, l, w = feat.shape
    out = decoder.forward(ad.reshape(feat, (1, d, l, w)))
    return ad.reshape(out, (l * scale, w * scale))


def param_count(module) -> int:
    """Exact number of scalar parameters in an encoder or decoder."""
    return int(sum(t.size for t in module.params().values()))


def infer_arrays(kind: str, encoder: Encoder, decoder, x_in, target_dims) -> np.ndarray:
    """Full-image inference: encode, decode to `target_dims`, clamp to [0, 1].

    Coordinate checkpoints accept any target dims; convolutional ones require
    target == scale x input dims.
    """
    x_in = np.asarray(x_in, dtype=np.float32)
    h, w = x_in.shape
    th, tw = int(target_dims[0]), int(target_dims[1])
    feat = encode(x_in, encoder)
    if kind == "coord":
        out = decode_image(feat, (th, tw), decoder)
    elif kind == "conv":
        s = decoder.scale
        if (th, tw) != (h * s, w * s):
            raise UsageError(
                f"conv decoder is fixed at {s}x: input {h}x{w} can only produce "
                f"{h * s}x{w * s}, not {th}x{tw}"
            )
        out = conv_decode(feat, s, decoder)
    else:
        raise ConfigurationError(f"unknown model kind {kind!r}")
    _finite(out, "decoded output")
    return np.clip(out.data, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# checkpoints: directory of FT1 tensors plus a JSON descriptor

_DESCRIPTOR = "descriptor.json"


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def save_checkpoint(path, kind: str, encoder: Encoder, decoder, *, step: int = 0,
                    seed: int = 0, extra: dict | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    desc = {
        "arch": kind,
        "d": encoder.d,
        "blocks": encoder.blocks,
        "mlp_layers": decoder.layers if isinstance(decoder, CoordDecoder) else 0,
        "hidden": decoder.hidden if isinstance(decoder, CoordDecoder) else 0,
        "liif_mode": decoder.liif_mode if isinstance(decoder, CoordDecoder) else False,
        "scale": decoder.scale if isinstance(decoder, ConvDecoder) else 0,
        "step": step,
        "seed": seed,
    }
    if extra:
        desc.update(extra)
    tensors = {f"encoder.{k}": t for k, t in encoder.params().items()}
    tensors.update({f"decoder.{k}": t for k, t in decoder.params().items()})
    for name, tensor in tensors.items():
        write_ft1(path / (_safe_name(name) + ".ft1"), tensor.data)
    (path / _DESCRIPTOR).write_text(json.dumps(desc, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Rebuild (kind, encoder, decoder, descriptor) from a checkpoint dir."""
    path = Path(path)
    desc_file = path / _DESCRIPTOR
    if not desc_file.exists():
        raise FileNotFoundError(f"no checkpoint descriptor at {desc_file}")
    desc = json.loads(desc_file.read_text())
    kind = desc["arch"]
    rng = np.random.default_rng(0)
    encoder = Encoder(desc["d"], desc["blocks"], rng)
    if kind == "coord":
        decoder = CoordDecoder(desc["d"], desc["hidden"], desc["mlp_layers"],
                               desc.get("liif_mode", False), rng)
    elif kind == "conv":
        decoder = ConvDecoder(desc["d"], desc["scale"], rng)
    else:
        raise ConfigurationError(f"unknown checkpoint arch {kind!r}")
    for prefix, module in (("encoder", encoder), ("decoder", decoder)):
        for name, tensor in module.params().items():
            data = read_ft1(path / (_safe_name(f"{prefix}.{name}") + ".ft1"))
            if data.shape != tensor.shape:
                raise ConfigurationError(
                    f"checkpoint tensor {prefix}.{name} has shape {data.shape}, "
                    f"expected {tensor.shape}"
                )
            tensor.data = data.astype(ad.default_dtype())
    return kind, encoder, decoder, desc
