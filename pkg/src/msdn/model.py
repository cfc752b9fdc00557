"""The two mutual attention sub-nets.

The attribute->visual sub-net scores every (attribute, region) pair with
a bilinear form through W1, normalizes over attributes within each
region, pools regions into per-attribute visual features F, and maps
them through W2 to a per-attribute confidence vector psi.

The visual->attribute sub-net mirrors it: bilinear scores through W3
normalized over regions within each attribute, attribute pooling into
per-region semantic features S, a W4 mapping to per-region scores
psi_bar, and a final bilinear projection through W_att that turns the
R-dimensional psi_bar into the K-dimensional embedding Psi so both
sub-nets score classes in the same attribute space.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import data_io
from .errors import ContainerFormatError, ShapeError
from .ndmath import Rng, softmax_stable

PARAM_NAMES = ("W1", "W2", "W3", "W4", "W_att")


@dataclass(frozen=True)
class ModelDims:
    visual_dim: int     # d_v, per-region feature width
    attr_dim: int       # d_a, attribute word-vector width
    num_attributes: int  # K
    num_regions: int    # R

    @staticmethod
    def for_dataset(ds: data_io.Dataset) -> "ModelDims":
        return ModelDims(
            visual_dim=ds.visual_dim,
            attr_dim=ds.attr_dim,
            num_attributes=ds.num_attributes,
            num_regions=ds.num_regions,
        )


@dataclass(frozen=True)
class ModelParams:
    """The five learnable matrices plus the dims they were built for."""

    dims: ModelDims
    W1: np.ndarray      # (d_a, d_v) attribute->visual attention bilinear form
    W2: np.ndarray      # (d_a, d_v) embedding for psi
    W3: np.ndarray      # (d_v, d_a) visual->attribute attention bilinear form
    W4: np.ndarray      # (d_v, d_a) embedding for psi_bar
    W_att: np.ndarray   # (d_v, d_a) projection of psi_bar into attribute space

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def with_updates(self, arrays: dict[str, np.ndarray]) -> "ModelParams":
        return replace(self, **arrays)


@dataclass(frozen=True)
class ForwardTrace:
    """Everything one image's forward pass produces."""

    beta: np.ndarray     # (K, R) attention over attributes, per region
    F: np.ndarray        # (K, d_v) attribute-based visual features
    psi: np.ndarray      # (K,) attribute confidences, first sub-net
    tau: np.ndarray      # (R, K) attention over regions, per attribute
    S: np.ndarray        # (R, d_a) visual-based attribute features
    psi_bar: np.ndarray  # (R,) per-region scores, second sub-net
    Psi: np.ndarray      # (K,) attribute confidences, second sub-net


def _glorot(rng: Rng, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, rows, cols)


def init_params_from_rng(dims: ModelDims, rng: Rng) -> ModelParams:
    """Glorot-uniform initialization, drawing W1, W2, W3, W4, W_att in order."""
    d_v, d_a = dims.visual_dim, dims.attr_dim
    if min(d_v, d_a, dims.num_attributes, dims.num_regions) < 1:
        raise ShapeError(f"model dims must be positive, got {dims}")
    return ModelParams(
        dims=dims,
        W1=_glorot(rng, d_a, d_v),
        W2=_glorot(rng, d_a, d_v),
        W3=_glorot(rng, d_v, d_a),
        W4=_glorot(rng, d_v, d_a),
        W_att=_glorot(rng, d_v, d_a),
    )


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    return init_params_from_rng(dims, Rng(seed))


def _check_inputs(regions: np.ndarray, attrs: np.ndarray, params: ModelParams) -> None:
    if regions.ndim != 2 or attrs.ndim != 2:
        raise ShapeError(
            f"expected 2-D region/attribute matrices, got {regions.shape} and {attrs.shape}"
        )
    d_v, d_a = params.dims.visual_dim, params.dims.attr_dim
    if regions.shape[1] != d_v:
        raise ShapeError(f"region features have width {regions.shape[1]}, model expects {d_v}")
    if attrs.shape[1] != d_a:
        raise ShapeError(f"attribute vectors have width {attrs.shape[1]}, model expects {d_a}")


def a2v_forward(
    regions: np.ndarray, attrs: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Attribute->visual pass: returns (beta, F, psi).

    beta[k, r] softmax-normalizes the bilinear scores over attributes k
    within each region r; F_k pools regions under beta; psi_k is the
    bilinear match of attribute k with F_k through W2.
    """
    _check_inputs(regions, attrs, params)
    logits = attrs @ params.W1 @ regions.T          # (K, R)
    beta = softmax_stable(logits, axis=0)
    F = beta @ regions                              # (K, d_v)
    psi = ((attrs @ params.W2) * F).sum(axis=1)     # (K,)
    return beta, F, psi


def v2a_forward(
    regions: np.ndarray, attrs: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Visual->attribute pass: returns (tau, S, psi_bar, Psi).

    tau[r, k] softmax-normalizes the bilinear scores over regions r
    within each attribute k; S_r pools attribute vectors under tau;
    psi_bar_r matches region r against S_r through W4; Psi projects
    psi_bar into attribute space via the bilinear region-attribute
    compatibility through W_att.
    """
    _check_inputs(regions, attrs, params)
    logits = regions @ params.W3 @ attrs.T          # (R, K)
    tau = softmax_stable(logits, axis=0)
    S = tau @ attrs                                 # (R, d_a)
    psi_bar = ((regions @ params.W4) * S).sum(axis=1)  # (R,)
    att = regions @ params.W_att @ attrs.T          # (R, K)
    Psi = psi_bar @ att                             # (K,)
    return tau, S, psi_bar, Psi


def forward(regions: np.ndarray, attrs: np.ndarray, params: ModelParams) -> ForwardTrace:
    """Run both sub-nets on one image."""
    beta, F, psi = a2v_forward(regions, attrs, params)
    tau, S, psi_bar, Psi = v2a_forward(regions, attrs, params)
    return ForwardTrace(beta=beta, F=F, psi=psi, tau=tau, S=S, psi_bar=psi_bar, Psi=Psi)


def class_scores(embedding: np.ndarray, class_semantics: np.ndarray) -> np.ndarray:
    """Compatibility of a K-dim embedding with every class semantic vector."""
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.ndim != 1 or class_semantics.ndim != 2:
        raise ShapeError(
            f"expected vector and matrix, got {embedding.shape} and {class_semantics.shape}"
        )
    if class_semantics.shape[1] != embedding.shape[0]:
        raise ShapeError(
            f"embedding length {embedding.shape[0]} != class semantic width "
            f"{class_semantics.shape[1]}"
        )
    return class_semantics @ embedding


def _softmax_cols_backward(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    # probs = softmax over axis 0, column by column
    return probs * (d_probs - (probs * d_probs).sum(axis=0, keepdims=True))


def backward(
    regions: np.ndarray,
    attrs: np.ndarray,
    params: ModelParams,
    trace: ForwardTrace,
    d_psi: np.ndarray,
    d_Psi: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. the five parameter matrices.

    ``d_psi`` and ``d_Psi`` are the loss gradients w.r.t. the two
    embeddings of this image.
    """
    # first sub-net: psi = rowsum((A @ W2) * F), F = beta @ V
    m = attrs @ params.W2
    d_m = d_psi[:, None] * trace.F
    d_F = d_psi[:, None] * m
    g_W2 = attrs.T @ d_m
    d_beta = d_F @ regions.T
    d_logits1 = _softmax_cols_backward(trace.beta, d_beta)
    g_W1 = attrs.T @ d_logits1 @ regions

    # second sub-net: Psi = psi_bar @ (V @ W_att @ A^T)
    att = regions @ params.W_att @ attrs.T
    d_psi_bar = att @ d_Psi
    d_att = np.outer(trace.psi_bar, d_Psi)
    g_W_att = regions.T @ d_att @ attrs

    # psi_bar = rowsum((V @ W4) * S), S = tau @ A
    nmat = regions @ params.W4
    d_n = d_psi_bar[:, None] * trace.S
    d_S = d_psi_bar[:, None] * nmat
    g_W4 = regions.T @ d_n
    d_tau = d_S @ attrs.T
    d_logits2 = _softmax_cols_backward(trace.tau, d_tau)
    g_W3 = regions.T @ d_logits2 @ attrs

    return {"W1": g_W1, "W2": g_W2, "W3": g_W3, "W4": g_W4, "W_att": g_W_att}


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.as_dict().items()}


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    """Write the five matrices plus a dims vector (d_v, d_a, K, R)."""
    dims = np.asarray(
        [
            params.dims.visual_dim,
            params.dims.attr_dim,
            params.dims.num_attributes,
            params.dims.num_regions,
        ],
        dtype=np.int32,
    )
    items = [(name, getattr(params, name)) for name in PARAM_NAMES]
    items.append(("dims", dims))
    data_io.write_container(path, items)


def load_checkpoint(path) -> ModelParams:
    tensors = dict(data_io.read_container(path))
    missing = [n for n in (*PARAM_NAMES, "dims") if n not in tensors]
    if missing:
        raise ContainerFormatError(f"checkpoint missing tensors: {', '.join(missing)}")
    dims_vec = tensors["dims"]
    if dims_vec.shape != (4,):
        raise ContainerFormatError(f"checkpoint dims must have 4 entries, got {dims_vec.shape}")
    dims = ModelDims(*(int(v) for v in dims_vec))
    expected = {
        "W1": (dims.attr_dim, dims.visual_dim),
        "W2": (dims.attr_dim, dims.visual_dim),
        "W3": (dims.visual_dim, dims.attr_dim),
        "W4": (dims.visual_dim, dims.attr_dim),
        "W_att": (dims.visual_dim, dims.attr_dim),
    }
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise ContainerFormatError(
                f"checkpoint tensor {name} has shape {tensors[name].shape}, expected {shape}"
            )
    return ModelParams(dims=dims, **{name: tensors[name] for name in PARAM_NAMES})
