"""Multicell MISO downlink model: channels, beamformers, SINR and rates.

Users are indexed globally ``u = 0..K-1`` in BS order; ``cfg.users[u]`` gives
the ``(b, k)`` tuple (serving BS, index within the cell). Channels are held as
a complex array ``h[n, u, :]``: the row vector from BS ``n`` to user ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Array dimensions disagree with the network configuration."""


@dataclass(frozen=True)
class NetworkConfig:
    B: int
    users_per_bs: tuple
    T: int
    sigma2: float = 1.0
    P: tuple = ()
    alpha: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "users_per_bs", tuple(int(k) for k in self.users_per_bs))
        if self.B < 1 or self.T < 1:
            raise ValueError("need B >= 1 and T >= 1")
        if len(self.users_per_bs) != self.B or min(self.users_per_bs) < 1:
            raise ValueError("users_per_bs needs one count >= 1 per BS")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        P = tuple(float(p) for p in self.P) if len(self.P) else (1.0,) * self.B
        alpha = tuple(float(a) for a in self.alpha) if len(self.alpha) else (1.0,) * self.K
        if len(P) != self.B or min(P) <= 0:
            raise ValueError("P needs one positive budget per BS")
        if len(alpha) != self.K or min(alpha) <= 0:
            raise ValueError("alpha needs one positive weight per user")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_snr(cls, B, users_per_bs, T, snr_db, sigma2=1.0, alpha=()):
        """Per-BS budget ``P_b = SNR * sigma2``."""
        p = 10 ** (snr_db / 10) * sigma2
        return cls(B, tuple(users_per_bs), T, sigma2, (p,) * B, tuple(alpha))

    @property
    def K(self):
        return sum(self.users_per_bs)

    @property
    def users(self):
        return [(b, k) for b in range(self.B) for k in range(self.users_per_bs[b])]

    @property
    def serving_bs(self):
        return np.repeat(np.arange(self.B), self.users_per_bs)

    def user_index(self, user):
        b, k = user
        if not (0 <= b < self.B and 0 <= k < self.users_per_bs[b]):
            raise IndexError(f"no user {user}")
        return sum(self.users_per_bs[:b]) + k

    def users_of(self, b):
        start = sum(self.users_per_bs[:b])
        return list(range(start, start + self.users_per_bs[b]))


@dataclass(frozen=True)
class ChannelSet:
    h: np.ndarray  # (B, K, T) complex

    def __getitem__(self, key):
        n, u = key
        return self.h[n, u]

    def check(self, cfg):
        if self.h.shape != (cfg.B, cfg.K, cfg.T):
            raise DimensionError(f"channels have shape {self.h.shape}, expected {(cfg.B, cfg.K, cfg.T)}")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channels contain non-finite entries")
        return self

    def perturbed(self, delta):
        return ChannelSet(self.h + delta)


@dataclass(frozen=True)
class BeamformerSet:
    w: np.ndarray  # (K, T) complex, row u is the column vector w_{b,k}
    meta: dict = field(default_factory=dict, compare=False)

    def __getitem__(self, u):
        return self.w[u]

    def check(self, cfg):
        if self.w.shape != (cfg.K, cfg.T):
            raise DimensionError(f"beamformers have shape {self.w.shape}, expected {(cfg.K, cfg.T)}")
        return self

    def scaled(self, s):
        return BeamformerSet(self.w * s)


def _as_channels(channels):
    return channels.h if isinstance(channels, ChannelSet) else np.asarray(channels)


def _as_beams(beams):
    return beams.w if isinstance(beams, BeamformerSet) else np.asarray(beams)


def gain_matrix(h, w, cfg):
    """``G[..., u, v] = |h[bs(v), u] w_v|^2``; leading axes of ``h`` broadcast (batched draws)."""
    bs = cfg.serving_bs
    # h[..., bs(v), u, :] for every (u, v)
    hv = np.take(h, bs, axis=-3)  # (..., K_v, K_u, T)
    amp = np.einsum("...vut,vt->...uv", hv, w)
    return np.abs(amp) ** 2


def sinr_all(channels, beams, cfg):
    h, w = _as_channels(channels), _as_beams(beams)
    if h.shape[-3:] != (cfg.B, cfg.K, cfg.T) or w.shape != (cfg.K, cfg.T):
        raise DimensionError("channel/beam dimensions inconsistent with configuration")
    G = gain_matrix(h, w, cfg)
    sig = np.diagonal(G, axis1=-2, axis2=-1)
    interf = G.sum(axis=-1) - sig
    return sig / (cfg.sigma2 + interf)


def sinr(channels, beams, cfg, user):
    """SINR of ``user`` (a ``(b, k)`` tuple), intra- and inter-cell terms kept apart."""
    h, w = _as_channels(channels), _as_beams(beams)
    if h.shape != (cfg.B, cfg.K, cfg.T) or w.shape != (cfg.K, cfg.T):
        raise DimensionError("channel/beam dimensions inconsistent with configuration")
    b, _ = user
    u = cfg.user_index(user)
    signal = abs(h[b, u] @ w[u]) ** 2
    intra = sum(abs(h[b, u] @ w[j]) ** 2 for j in cfg.users_of(b) if j != u)
    inter = sum(abs(h[n, u] @ w[l]) ** 2 for n in range(cfg.B) if n != b for l in cfg.users_of(n))
    return float(signal / (cfg.sigma2 + intra + inter))


def weighted_sum_rate(channels, beams, cfg):
    """Weighted sum rate in bits/s/Hz; batched over leading channel axes."""
    g = sinr_all(channels, beams, cfg)
    return np.log2(1.0 + g) @ np.asarray(cfg.alpha)


def per_bs_power(beams, cfg, b):
    if not 0 <= b < cfg.B:
        raise IndexError(f"no BS {b}")
    w = _as_beams(beams)
    return float(np.sum(np.abs(w[cfg.users_of(b)]) ** 2))


def crandn(rng, shape, var=1.0):
    """Circularly symmetric complex Gaussian samples with per-entry variance ``var``."""
    s = np.sqrt(var / 2.0)
    return s * rng.standard_normal(shape) + 1j * s * rng.standard_normal(shape)


def generate_channels(cfg, seed):
    """i.i.d. CN(0, 1) channel entries, reproducible for a fixed seed."""
    rng = np.random.default_rng(seed)
    return ChannelSet(crandn(rng, (cfg.B, cfg.K, cfg.T)))


class ZeroForcingError(ValueError):
    pass


def zero_forcing_beamformers(channels, cfg):
    """Zero-forcing baseline.

    ``w_{b,k}`` is the projection of ``h_{b_b,k}^H`` onto the null space of the
    channels from BS ``b`` to every other user (both cells), scaled so BS ``b``
    splits ``P_b`` equally over its users.
    """
    h = _as_channels(channels)
    w = np.zeros((cfg.K, cfg.T), dtype=complex)
    bs = cfg.serving_bs
    for u in range(cfg.K):
        b = bs[u]
        others = np.array([h[b, v] for v in range(cfg.K) if v != u])
        if len(others) >= cfg.T:
            raise ZeroForcingError(f"BS {b} cannot null {len(others)} users with {cfg.T} antennas")
        target = h[b, u].conj()
        if len(others):
            # orthonormal basis of span{h_v^H}; project it out
            q, _ = np.linalg.qr(others.conj().T)
            target = target - q @ (q.conj().T @ target)
        nrm = np.linalg.norm(target)
        if nrm < 1e-12:
            raise ZeroForcingError(f"user {cfg.users[u]} lies in the span of the nulled channels")
        w[u] = target / nrm * np.sqrt(cfg.P[b] / cfg.users_per_bs[b])
    return BeamformerSet(w, {"method": "zf"})
