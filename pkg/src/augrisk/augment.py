"""Dataset generation and augmentation transforms.

Originals are m i.i.d. rows with independent coordinates drawn from a
standardized distribution (mean 0, variance 1/p), optionally rescaled per
coordinate group.  Augmentation replaces each original row with k randomly
transformed copies; the block map records which original each augmented row
came from.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

DIST_KINDS = ("gaussian", "uniform", "gamma-2", "exponential", "t-3")

CACHE_FORMAT_VERSION = 1


class InfeasiblePatternError(ValueError):
    """Requested signal pattern cannot be realized."""


@dataclass(frozen=True)
class CoordinateDistribution:
    """Coordinate law, standardized to mean 0 and variance 1/p.

    Unit-variance standardizations:
      uniform      U(-sqrt 3, sqrt 3)
      gamma-2      (Gamma(2, 1) - 2) / sqrt 2
      exponential  Exp(1) - 1
      t-3          t_3 / sqrt 3   (t_3 has variance 3)
    """

    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    def draw_unit(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Draws with mean 0 and variance 1 (before the 1/sqrt(p) scale)."""
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), shape)
        if self.kind == "gamma-2":
            return (rng.gamma(2.0, 1.0, shape) - 2.0) / math.sqrt(2.0)
        if self.kind == "exponential":
            return rng.exponential(1.0, shape) - 1.0
        if self.kind == "t-3":
            return rng.standard_t(3, shape) / math.sqrt(3.0)
        raise AssertionError(self.kind)

    def draw(self, rng: np.random.Generator, shape, p: int) -> np.ndarray:
        return self.draw_unit(rng, shape) / math.sqrt(p)


@dataclass(frozen=True)
class GroupStructure:
    """Partition of the p coordinates into contiguous groups with scale factors."""

    sizes: tuple[int, ...]
    scales: tuple[float, ...] | None = None

    def __post_init__(self):
        if any(s < 1 for s in self.sizes):
            raise ValueError("group sizes must be >= 1")
        if self.scales is not None and len(self.scales) != len(self.sizes):
            raise ValueError("one scale per group required")

    @property
    def p(self) -> int:
        return int(sum(self.sizes))

    @property
    def n_groups(self) -> int:
        return len(self.sizes)

    def effective_scales(self) -> np.ndarray:
        if self.scales is None:
            return np.ones(self.n_groups)
        return np.asarray(self.scales, dtype=float)

    def slices(self) -> list[slice]:
        out, start = [], 0
        for s in self.sizes:
            out.append(slice(start, start + s))
            start += s
        return out

    def coordinate_scales(self) -> np.ndarray:
        """Per-coordinate scale multiplier, length p."""
        return np.repeat(self.effective_scales(), self.sizes)

    @staticmethod
    def single(p: int) -> "GroupStructure":
        return GroupStructure(sizes=(p,))

    @staticmethod
    def even(p: int, n_groups: int) -> "GroupStructure":
        if p % n_groups != 0:
            raise ValueError("p must be divisible by n_groups")
        return GroupStructure(sizes=(p // n_groups,) * n_groups)

    def with_scales(self, scales) -> "GroupStructure":
        return GroupStructure(self.sizes, tuple(float(s) for s in scales))


@dataclass(frozen=True)
class AugmentationScheme:
    """One of the supported random transform families.

    variant "permutation" shuffles the top ceil(r_perm * p_t) coordinates of
    each group, independently per group and per transform.  "sign_flip" flips
    the signs of a fixed coordinate set by i.i.d. Rademacher draws.  "crop"
    zeroes a fresh uniformly random ceil(r_crop * p)-subset per transform.
    "noise_inject" adds N(0, noise_var / n) to every coordinate.

    `forced_indices` (crop and sign_flip only) marks coordinates the transform
    always acts on; the total count is max(ceil(rate * p), len(forced)), with
    the remainder drawn at random from the rest.  This is the "known zero
    coordinates" variant.
    """

    variant: str = "none"
    r_perm: float = 1.0
    r_flip: float = 1.0
    r_crop: float = 0.0
    noise_var: float = 0.0
    groups: GroupStructure | None = None
    flip_indices: tuple[int, ...] | None = None
    forced_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.variant not in ("none", "permutation", "sign_flip", "crop", "noise_inject"):
            raise ValueError(f"unknown scheme variant {self.variant!r}")
        for rate in (self.r_perm, self.r_flip, self.r_crop):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        if self.variant == "permutation" and self.groups is None:
            raise ValueError("permutation scheme requires a GroupStructure")
        if self.variant == "noise_inject" and self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")

    def n_flip(self, p: int) -> int:
        if self.flip_indices is not None:
            return len(self.flip_indices)
        return _count(self.r_flip, p, self.forced_indices)

    def flip_set(self, p: int) -> np.ndarray:
        """Flipped coordinates: explicit set, or the first ceil(r_flip p)."""
        if self.flip_indices is not None:
            return np.asarray(self.flip_indices, dtype=int)
        n_forced = 0 if self.forced_indices is None else len(self.forced_indices)
        total = self.n_flip(p)
        if n_forced == 0:
            return np.arange(total)
        forced = np.asarray(self.forced_indices, dtype=int)
        rest = np.setdiff1d(np.arange(p), forced)[: total - n_forced]
        return np.concatenate([forced, rest])

    def n_crop(self, p: int) -> int:
        return _count(self.r_crop, p, self.forced_indices)

    def descriptor(self) -> dict:
        d = {"variant": self.variant}
        if self.variant == "permutation":
            d["r_perm"] = self.r_perm
            d["group_sizes"] = list(self.groups.sizes)
            if self.groups.scales is not None:
                d["group_scales"] = list(self.groups.scales)
        elif self.variant == "sign_flip":
            d["r_flip"] = self.r_flip
            if self.flip_indices is not None:
                d["flip_indices"] = list(self.flip_indices)
        elif self.variant == "crop":
            d["r_crop"] = self.r_crop
        elif self.variant == "noise_inject":
            d["noise_var"] = self.noise_var
        if self.forced_indices is not None:
            d["forced_indices"] = list(self.forced_indices)
        return d


def _count(rate: float, p: int, forced) -> int:
    base = math.ceil(rate * p)
    if forced is not None:
        base = max(base, len(forced))
    return min(base, p)


@dataclass(frozen=True)
class SignalSpec:
    """How the true coefficient vector is generated.

    "group-constant" repeats one unit-variance draw per coordinate group.
    "sparse" zeroes a ceil((1 - rho_star) p) subset; a fraction s0 of the
    zeros is pinned to the bottom coordinates (the "known zeros"), the rest
    are placed uniformly at random.
    """

    pattern: str = "group-constant"
    rho_star: float = 1.0
    s0: float = 0.0
    entry_kind: str = "t-3"
    L: float = 20.0
    r: float = 0.1

    def __post_init__(self):
        if self.pattern not in ("group-constant", "sparse"):
            raise ValueError(f"unknown signal pattern {self.pattern!r}")
        if not 0.0 <= self.rho_star <= 1.0 or not 0.0 <= self.s0 <= 1.0:
            raise ValueError("rho_star and s0 must lie in [0, 1]")

    def n_zero(self, p: int) -> int:
        return math.ceil((1.0 - self.rho_star) * p)

    def n_known_zero(self, p: int) -> int:
        return math.ceil(self.s0 * (1.0 - self.rho_star) * p)


def _unit_entries(kind: str, rng: np.random.Generator, size: int) -> np.ndarray:
    return CoordinateDistribution(kind).draw_unit(rng, size)


def sample_original(dist: CoordinateDistribution, groups: GroupStructure,
                    m: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """m i.i.d. rows; coordinates independent, variance scale^2 / p per group."""
    if groups.p != p:
        raise ValueError("group sizes must sum to p")
    z = dist.draw(rng, (m, p), p)
    scales = groups.coordinate_scales()
    if not np.all(scales == 1.0):
        z = z * scales[None, :]
    return z


def make_beta_star(spec: SignalSpec, groups: GroupStructure, p: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Coefficient vector following `spec`; always inside the (L, r) ball pair."""
    if spec.pattern == "group-constant":
        if groups.p != p:
            raise ValueError("group sizes must sum to p")
        values = _unit_entries(spec.entry_kind, rng, groups.n_groups)
        beta = np.repeat(values, groups.sizes)
    else:
        n_zero = spec.n_zero(p)
        n_known = spec.n_known_zero(p)
        if n_known > n_zero:
            raise InfeasiblePatternError(
                f"known zeros {n_known} exceed zero budget {n_zero}")
        beta = _unit_entries(spec.entry_kind, rng, p)
        free = np.arange(p - n_known) if n_known else np.arange(p)
        extra = rng.choice(free, size=n_zero - n_known, replace=False)
        beta[extra] = 0.0
        if n_known:
            beta[p - n_known:] = 0.0
    # The heavy-tailed entry laws can in principle escape the norm caps;
    # rescale rather than redraw so the draw count stays deterministic.
    cap2 = spec.L * math.sqrt(p)
    capinf = spec.L * p ** ((1.0 - spec.r) / 2.0)
    scale = max(np.linalg.norm(beta) / cap2,
                np.max(np.abs(beta), initial=0.0) / capinf, 1.0)
    return beta / scale


def augment_dataset(z: np.ndarray, scheme: AugmentationScheme, k: int,
                    rng: np.random.Generator,
                    total_rows: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """k i.i.d. transforms per original row.

    Returns the n x p augmented matrix (n = m k) and the block map: entry i is
    the 0-based index of the original row that augmented row i came from.
    The noise-injection scheme adds variance noise_var / n per coordinate,
    with n the experiment row count: pass total_rows when transforming rows
    that are not the experiment itself (Monte Carlo covariance estimation).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m, p = z.shape
    blocks = np.repeat(np.arange(m), k)
    if scheme.variant == "none":
        x = z.copy() if k == 1 else np.repeat(z, k, axis=0)
        return x, blocks

    x = np.repeat(z, k, axis=0)
    n = m * k
    if scheme.variant == "permutation":
        if scheme.groups.p != p:
            raise ValueError("scheme groups inconsistent with data width")
        for sl, size in zip(scheme.groups.slices(), scheme.groups.sizes):
            top = math.ceil(scheme.r_perm * size)
            if top <= 1:
                continue
            cols = np.arange(sl.start, sl.start + top)
            x[:, cols] = rng.permuted(x[:, cols], axis=1)
    elif scheme.variant == "sign_flip":
        idx = scheme.flip_set(p)
        if idx.size:
            signs = rng.choice([-1.0, 1.0], size=(n, idx.size))
            x[:, idx] *= signs
    elif scheme.variant == "crop":
        total = scheme.n_crop(p)
        if scheme.forced_indices is not None:
            forced = np.asarray(scheme.forced_indices, dtype=int)
            x[:, forced] = 0.0
            extra = total - forced.size
            if extra > 0:
                rest = np.setdiff1d(np.arange(p), forced)
                scores = rng.random((n, rest.size))
                pick = np.argpartition(scores, extra - 1, axis=1)[:, :extra]
                np.put_along_axis(x[:, rest], pick, 0.0, axis=1)
        elif total > 0:
            scores = rng.random((n, p))
            pick = np.argpartition(scores, total - 1, axis=1)[:, :total]
            np.put_along_axis(x, pick, 0.0, axis=1)
    elif scheme.variant == "noise_inject":
        n_eff = total_rows if total_rows is not None else n
        x = x + rng.normal(0.0, math.sqrt(scheme.noise_var / n_eff), size=(n, p))
    return x, blocks


def apply_transform(z_rows: np.ndarray, scheme: AugmentationScheme,
                    rng: np.random.Generator,
                    total_rows: int | None = None) -> np.ndarray:
    """One independent transform per row (k = 1 augmentation of each row)."""
    x, _ = augment_dataset(z_rows, scheme, 1, rng, total_rows=total_rows)
    return x


def to_csv(path, x: np.ndarray, y: np.ndarray, blocks: np.ndarray) -> None:
    """Dataset export: header x1..xp, y, block."""
    p = x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(p)] + ["y", "block"])
        for i in range(x.shape[0]):
            w.writerow([repr(float(v)) for v in x[i]] + [int(y[i]), int(blocks[i])])


def save_cache(path, x: np.ndarray, y: np.ndarray, blocks: np.ndarray,
               provenance: str = "data") -> None:
    np.savez_compressed(path, format_version=CACHE_FORMAT_VERSION,
                        provenance=provenance, x=x, y=y, blocks=blocks)


def load_cache(path) -> dict:
    with np.load(path, allow_pickle=False) as f:
        if int(f["format_version"]) != CACHE_FORMAT_VERSION:
            raise ValueError("unsupported cache format version")
        return {"x": f["x"], "y": f["y"], "blocks": f["blocks"],
                "provenance": str(f["provenance"])}
