"""Bit-flip error injection engine.

An error map is the exact set of (parameter, element, bit) flips for one
run. Maps are drawn as K ~ Binomial(N, ber) over the N unprotected bit
sites of the targeted parameters, followed by a uniform choice of K
distinct sites -- the joint distribution is exactly independent per-bit
Bernoulli(ber), but the work is O(K) instead of O(N).

Bit numbering: 0 is the least significant mantissa bit, 31 the sign bit.
Flips are persistent parameter corruption; applying the same map twice
restores the original model (XOR involution).
"""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, IntegrityError
from .seeding import philox

SIGN_MASK = 0x80000000
EXPONENT_MASK = 0x7F800000
MANTISSA_MASK = 0x007FFFFF

_FIELD_MASKS = {"sign": SIGN_MASK, "exponent": EXPONENT_MASK, "mantissa": MANTISSA_MASK}

TARGET_ENTIRE_MODEL = "entire_model"
TARGET_COMPONENTS = ("mlp", "embedding")


def flip_bit(word: int, position: int) -> int:
    """Toggle one bit of a 32-bit word. Applying twice is the identity."""
    if not 0 <= position <= 31:
        raise ValueError(f"bit position must be in [0, 31], got {position}")
    return (int(word) ^ (1 << position)) & 0xFFFFFFFF


def sbp_mask(fields: Sequence[str]) -> int:
    """Protected-bit mask for a subset of {sign, exponent, mantissa}."""
    mask = 0
    for f in set(fields):
        try:
            mask |= _FIELD_MASKS[f]
        except KeyError:
            raise ConfigError(f"unknown float field {f!r}") from None
    return mask


@dataclass(frozen=True)
class InjectionConfig:
    """One injection draw: error rate, target selector, protection, seed.

    targets is either "entire_model", a component tag ("mlp"/"embedding"),
    or an explicit list of parameter names. protected_bits is a 32-bit mask
    where 1 means the position never flips.
    """

    ber: float
    targets: str | tuple[str, ...] = TARGET_ENTIRE_MODEL
    protected_bits: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise ConfigError(f"ber must be within [0, 1], got {self.ber}")
        if not 0 <= self.protected_bits <= 0xFFFFFFFF:
            raise ConfigError("protected_bits must be a 32-bit mask")
        if isinstance(self.targets, list):
            object.__setattr__(self, "targets", tuple(self.targets))


@dataclass
class ErrorMap:
    """The exact flips of one injection run, plus provenance."""

    seed: int
    ber: float
    protected_bits: int
    entries: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def n_entries(self) -> int:
        return sum(e.size for e, _ in self.entries.values())

    def iter_entries(self) -> Iterator[tuple[str, int, int]]:
        for name, (elems, bits) in self.entries.items():
            for e, b in zip(elems.tolist(), bits.tolist()):
                yield name, e, b


def resolve_targets(model, targets) -> list[str]:
    """Parameter names selected by a target spec, in model parameter order."""
    if isinstance(targets, str):
        if targets == TARGET_ENTIRE_MODEL:
            return list(model.parameters)
        if targets in TARGET_COMPONENTS:
            return [n for n, tag in model.component.items() if tag == targets]
        raise ConfigError(f"unknown target {targets!r}")
    names = list(targets)
    for n in names:
        if n not in model.parameters:
            raise ConfigError(f"target parameter {n!r} not in model")
    return names


def _distinct_uniform(rng: np.random.Generator, total: int, k: int) -> np.ndarray:
    """k distinct site ids uniform over [0, total), sorted; O(k) memory."""
    if k >= total:
        return np.arange(total, dtype=np.int64)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if k > total // 2:
        # sample the complement instead; its distribution is also uniform
        keep_out = _distinct_uniform(rng, total, total - k)
        mask = np.ones(total, dtype=bool)
        mask[keep_out] = False
        return np.nonzero(mask)[0].astype(np.int64)
    picks = np.unique(rng.integers(0, total, size=k, dtype=np.int64))
    while picks.size < k:
        extra = rng.integers(0, total, size=k - picks.size, dtype=np.int64)
        picks = np.union1d(picks, extra)
    return picks


def build_error_map(model, cfg: InjectionConfig) -> ErrorMap:
    """Draw the flips for one run; deterministic for a given (model, cfg)."""
    names = resolve_targets(model, cfg.targets)
    if not names:
        raise ConfigError("target selector resolves to no parameters")
    open_bits = np.array(
        [b for b in range(32) if not cfg.protected_bits & (1 << b)], dtype=np.uint8
    )
    emap = ErrorMap(seed=cfg.seed, ber=cfg.ber, protected_bits=cfg.protected_bits)
    u = open_bits.size
    if u == 0 or cfg.ber == 0.0:
        return emap

    sizes = np.array([model.parameters[n].size for n in names], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    total_sites = int(offsets[-1]) * u

    rng = philox(cfg.seed)
    k = int(rng.binomial(total_sites, cfg.ber))
    sites = _distinct_uniform(rng, total_sites, k)
    if sites.size == 0:
        return emap

    elem_global = sites // u
    bits = open_bits[sites % u]
    bounds = np.searchsorted(elem_global, offsets)
    for i, name in enumerate(names):
        lo, hi = bounds[i], bounds[i + 1]
        if lo == hi:
            continue
        emap.entries[name] = (
            (elem_global[lo:hi] - offsets[i]).astype(np.int64),
            bits[lo:hi].copy(),
        )
    return emap


def apply_error_map(model, emap: ErrorMap) -> None:
    """Toggle exactly the listed bits, in place.

    The map is validated first; a dangling entry raises IntegrityError and
    leaves the model untouched.
    """
    for name, (elems, bits) in emap.entries.items():
        if name not in model.parameters:
            raise IntegrityError(f"error map names unknown parameter {name!r}")
        size = model.parameters[name].size
        if elems.size and (elems.min() < 0 or elems.max() >= size):
            raise IntegrityError(f"error map element index out of range for {name!r}")
        if bits.size and bits.max() > 31:
            raise IntegrityError(f"error map bit position out of range for {name!r}")
    for name, (elems, bits) in emap.entries.items():
        words = model.parameters[name].words()
        masks = (np.uint32(1) << bits.astype(np.uint32)).astype(np.uint32)
        _kernels.xor_apply_u32(words, elems, masks)


def save_error_map(emap: ErrorMap, path) -> None:
    """Line-oriented text export enabling exact replay of a corruption."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# drsfi-error-map v1\tseed={emap.seed}\tber={emap.ber!r}"
            f"\tmask=0x{emap.protected_bits:08X}\n"
        )
        for name, elem, bit in emap.iter_entries():
            fh.write(f"{name}\t{elem}\t{bit}\n")


def load_error_map(path) -> ErrorMap:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split("\t")
        if not parts or not parts[0].startswith("# drsfi-error-map"):
            raise ConfigError(f"{path}: not an error map file")
        meta = dict(p.split("=", 1) for p in parts[1:])
        try:
            seed = int(meta["seed"])
            ber = float(meta["ber"])
            mask = int(meta["mask"], 16)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: bad error map header: {exc}") from None
        per_param: dict[str, tuple[list[int], list[int]]] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ConfigError(f"{path}:{lineno}: expected 3 tab-separated fields")
            name, elem_s, bit_s = fields
            try:
                elem, bit = int(elem_s), int(bit_s)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-integer entry") from None
            if not 0 <= bit <= 31:
                raise ConfigError(f"{path}:{lineno}: bit position out of range")
            per_param.setdefault(name, ([], []))
            per_param[name][0].append(elem)
            per_param[name][1].append(bit)
    emap = ErrorMap(seed=seed, ber=ber, protected_bits=mask)
    for name, (elems, bits) in per_param.items():
        emap.entries[name] = (
            np.asarray(elems, dtype=np.int64),
            np.asarray(bits, dtype=np.uint8),
        )
    return emap
