"""Window tokenization, patch projection, and positional embeddings.

A W_s x W_s x S sample window is cut into an exact grid of w x w x S
sub-patches (tokens), each projected to a K-vector by a shared ReLU
convolution kernel. Four positional embedding modes are provided:

* ``none``: all zeros.
* ``learnable``: a free N x K table.
* ``sinusoidal1d``: the standard interleaved sin/cos of the flat token index.
* ``sspe``: joint spatial-spectral encoding. Grid coordinates get interleaved
  sinusoids (x half then y half); the token's spectral content gets per-band
  sinusoids mixed by energy weights; both are projected to K and fused by a
  small MLP.

Every mode leaves row 0, the CLS position, at zero.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

__all__ = [
    "tokenize",
    "tokenize_batch",
    "PatchProjector",
    "SSPEConfig",
    "sinusoid_encoding",
    "sspe_spatial",
    "sspe_spectral",
    "PositionalEmbedding",
    "PE_MODES",
]

PE_MODES = ("none", "learnable", "sinusoidal1d", "sspe")


def tokenize(window, patch_side):
    """Split a (W_s, W_s, S) window into the row-major grid of sub-patches.

    Returns ``(tokens, coords)``: tokens is (N, w, w, S) with N = (W_s/w)^2,
    coords is (N, 2) grid indices (row, col) in enumeration order.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 3 or window.shape[0] != window.shape[1]:
        raise ValueError(f"window must be square (W_s, W_s, S), got {window.shape}")
    side = window.shape[0]
    w = int(patch_side)
    if w < 1 or side % w != 0:
        raise ValueError(f"patch side {w} must divide the window side {side}")
    g = side // w
    tokens = (
        window.reshape(g, w, g, w, -1).transpose(0, 2, 1, 3, 4).reshape(g * g, w, w, -1)
    )
    gx, gy = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
    coords = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return tokens, coords


def tokenize_batch(windows, patch_side):
    """Vectorized tokenize over a (B, W_s, W_s, S) stack of windows.

    Returns ``(tokens, coords)`` with tokens (B, N, w, w, S); the coordinate
    grid is shared by every window.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 4 or windows.shape[1] != windows.shape[2]:
        raise ValueError(f"expected (B, W_s, W_s, S) windows, got {windows.shape}")
    b, side = windows.shape[0], windows.shape[1]
    w = int(patch_side)
    if w < 1 or side % w != 0:
        raise ValueError(f"patch side {w} must divide the window side {side}")
    g = side // w
    tokens = (
        windows.reshape(b, g, w, g, w, -1)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, g * g, w, w, -1)
    )
    gx, gy = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
    coords = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return tokens, coords


class PatchProjector:
    """Shared linear map + ReLU from flattened sub-patches to K-vectors."""

    def __init__(self, embed_dim, patch_side, bands, rng):
        if min(embed_dim, patch_side, bands) < 1:
            raise ValueError("embed_dim, patch_side, and bands must all be >= 1")
        self.embed_dim = embed_dim
        self.patch_side = patch_side
        self.bands = bands
        fan_in = patch_side * patch_side * bands
        self.kernel = ad.glorot_uniform(
            rng, (embed_dim, patch_side, patch_side, bands), fan_in=fan_in, fan_out=embed_dim
        )
        self.bias = ad.parameter(np.zeros(embed_dim))

    def forward(self, tokens):
        """(..., N, w, w, S) tokens -> (..., N, K) nonnegative embeddings."""
        if isinstance(tokens, ad.Tensor):
            data_shape = tokens.shape
        else:
            tokens = ad.constant(np.asarray(tokens, dtype=np.float64))
            data_shape = tokens.shape
        w, s = self.patch_side, self.bands
        if data_shape[-3:] != (w, w, s):
            raise ValueError(f"tokens must end in ({w}, {w}, {s}), got {data_shape}")
        flat = ad.reshape(tokens, data_shape[:-3] + (w * w * s,))
        weight = ad.transpose(ad.reshape(self.kernel, (self.embed_dim, w * w * s)), (1, 0))
        return ad.relu(ad.affine(flat, weight, self.bias))

    def parameters(self):
        return {"projector.kernel": self.kernel, "projector.bias": self.bias}


def sinusoid_encoding(position, dim, wavelength, sin_dim):
    """Interleaved sin/cos of a scalar position over dim/2 geometric frequencies.

    Entry 2j is sin(position / wavelength^(2j/sin_dim)), entry 2j+1 the
    matching cos.
    """
    if dim < 2 or dim % 2 != 0:
        raise ValueError(f"encoding dim must be even and >= 2, got {dim}")
    j = np.arange(dim // 2)
    angle = position / np.power(float(wavelength), 2.0 * j / float(sin_dim))
    out = np.empty(dim)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


class SSPEConfig:
    """Constants and trainable pieces of the joint spatial-spectral encoding.

    Spatial sinusoids use wavelength ``lam``, spectral ones ``gamma``; both
    share the frequency-schedule denominator ``sin_dim``. The raw spatial
    (K_s) and spectral (K_sigma) features are projected to K and fused by an
    affine(2K -> K) + ReLU + affine(K -> K) MLP.
    """

    def __init__(self, embed_dim, rng, lam=10000.0, gamma=10000.0, sin_dim=None):
        if embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if min(lam, gamma) <= 0:
            raise ValueError("wavelengths must be positive")
        self.embed_dim = embed_dim
        self.lam = float(lam)
        self.gamma = float(gamma)
        self.sin_dim = int(sin_dim) if sin_dim is not None else embed_dim
        # x and y halves must each hold whole sin/cos pairs, so the spatial
        # width is K rounded up to a multiple of 4; spectral to a multiple of 2
        self.spatial_dim = 4 * ((embed_dim + 3) // 4)
        self.spectral_dim = 2 * ((embed_dim + 1) // 2)
        self.proj_spatial = ad.glorot_uniform(rng, (self.spatial_dim, embed_dim))
        self.proj_spectral = ad.glorot_uniform(rng, (self.spectral_dim, embed_dim))
        self.fuse_w1 = ad.glorot_uniform(rng, (2 * embed_dim, embed_dim))
        self.fuse_b1 = ad.parameter(np.zeros(embed_dim))
        self.fuse_w2 = ad.glorot_uniform(rng, (embed_dim, embed_dim))
        self.fuse_b2 = ad.parameter(np.zeros(embed_dim))

    def parameters(self):
        return {
            "sspe.proj_spatial": self.proj_spatial,
            "sspe.proj_spectral": self.proj_spectral,
            "sspe.fuse_w1": self.fuse_w1,
            "sspe.fuse_b1": self.fuse_b1,
            "sspe.fuse_w2": self.fuse_w2,
            "sspe.fuse_b2": self.fuse_b2,
        }


def sspe_spatial(x, y, cfg):
    """K_s-vector: sinusoids of grid x over the first half, of y over the second."""
    half = cfg.spatial_dim // 2
    return np.concatenate(
        [
            sinusoid_encoding(float(x), half, cfg.lam, cfg.sin_dim),
            sinusoid_encoding(float(y), half, cfg.lam, cfg.sin_dim),
        ]
    )


def sspe_spectral(band_profile, cfg):
    """K_sigma-vector: energy-weighted mixture of per-band-index sinusoids.

    Weights are the profile normalized to sum 1; an all-zero profile falls
    back to uniform weights.
    """
    profile = np.asarray(band_profile, dtype=np.float64)
    if profile.ndim != 1:
        raise ValueError(f"band profile must be a vector, got shape {profile.shape}")
    if (profile < 0).any():
        raise ValueError("band profile entries must be >= 0")
    total = profile.sum()
    weights = np.full_like(profile, 1.0 / len(profile)) if total == 0 else profile / total
    table = _band_table(len(profile), cfg)
    return weights @ table


def _band_table(bands, cfg):
    """(S, K_sigma) sinusoid row per band index."""
    return np.stack(
        [sinusoid_encoding(float(s), cfg.spectral_dim, cfg.gamma, cfg.sin_dim) for s in range(bands)]
    )


class PositionalEmbedding:
    """One of the four positional modes, emitting an (N+1) x K addend.

    Row 0 is the CLS position and is zero in every mode. ``forward`` returns
    (N+1, K) for data-independent modes and (B, N+1, K) for sspe, whose
    spectral half depends on each sample's band energies.
    """

    def __init__(self, mode, embed_dim, num_tokens, rng, lam=10000.0, gamma=10000.0):
        if mode not in PE_MODES:
            raise ValueError(f"unknown positional mode {mode!r}, expected one of {PE_MODES}")
        self.mode = mode
        self.embed_dim = embed_dim
        self.num_tokens = num_tokens
        self.table = None
        self.sspe = None
        if mode == "learnable":
            self.table = ad.glorot_uniform(rng, (num_tokens, embed_dim))
        elif mode == "sspe":
            self.sspe = SSPEConfig(embed_dim, rng, lam=lam, gamma=gamma)
        self.lam = float(lam)

    def parameters(self):
        if self.mode == "learnable":
            return {"pos.table": self.table}
        if self.mode == "sspe":
            return self.sspe.parameters()
        return {}

    def forward(self, coords, band_profiles=None):
        """Positional rows for tokens at ``coords``.

        ``band_profiles`` is (B, N, S) nonnegative energies, required by the
        sspe mode and ignored elsewhere.
        """
        n = self.num_tokens
        if len(coords) != n:
            raise ValueError(f"expected {n} token coordinates, got {len(coords)}")
        k = self.embed_dim
        if self.mode == "none":
            return ad.constant(np.zeros((n + 1, k)))
        if self.mode == "learnable":
            zero = ad.constant(np.zeros((1, k)))
            return ad.concat([zero, self.table], axis=0)
        if self.mode == "sinusoidal1d":
            dim = 2 * ((k + 1) // 2)
            rows = np.stack([sinusoid_encoding(float(i), dim, self.lam, dim) for i in range(n)])
            out = np.zeros((n + 1, k))
            out[1:] = rows[:, :k]
            return ad.constant(out)
        return self._forward_sspe(coords, band_profiles)

    def _forward_sspe(self, coords, band_profiles):
        cfg = self.sspe
        if band_profiles is None:
            raise ValueError("sspe mode needs per-token band profiles")
        profiles = np.asarray(band_profiles, dtype=np.float64)
        squeeze = profiles.ndim == 2
        if squeeze:
            profiles = profiles[None]
        b, n, bands = profiles.shape
        if n != self.num_tokens:
            raise ValueError(f"expected {self.num_tokens} profiles per sample, got {n}")

        spatial = np.stack([sspe_spatial(x, y, cfg) for x, y in coords])
        table = _band_table(bands, cfg)
        totals = profiles.sum(axis=-1, keepdims=True)
        weights = np.where(totals == 0, 1.0 / bands, profiles / np.where(totals == 0, 1.0, totals))
        spectral = weights @ table

        spa = ad.matmul(ad.constant(np.broadcast_to(spatial, (b, n, cfg.spatial_dim)).copy()), cfg.proj_spatial)
        spe = ad.matmul(ad.constant(spectral), cfg.proj_spectral)
        joint = ad.concat([spa, spe], axis=-1)
        hidden = ad.relu(ad.affine(joint, cfg.fuse_w1, cfg.fuse_b1))
        rows = ad.affine(hidden, cfg.fuse_w2, cfg.fuse_b2)
        zero = ad.constant(np.zeros((b, 1, self.embed_dim)))
        out = ad.concat([zero, rows], axis=1)
        if squeeze:
            out = ad.reshape(out, (n + 1, self.embed_dim))
        return out
