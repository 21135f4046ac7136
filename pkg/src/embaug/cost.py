"""Analytic FLOP accounting and the pixel-vs-embedding training cost ratio.

Conventions, declared once and used by both the predicted and the measured
path so the two are exactly comparable:
  multiply-add       = 2 FLOPs
  conv forward       = 2*Kh*Kw*Cin*Cout*Hout*Wout + Cout*Hout*Wout (bias)
  affine forward     = 2*d_in*d_out + d_out
  relu/pool/flatten  = element count of the result
  backward           = 2 x forward

The ratio compares training a classifier head on all pixel-space variants
(every variant runs the frozen feature extractor) against computing one
embedding per sample and producing the other variants with the cheap learned
transformer. N counts training variants per sample including the untouched
original, whose transformer cost is zero; the aggregate transformer term in
the ratio therefore uses the average cost across variants. Everything is
kept in exact rational arithmetic so measured meter totals can be compared
for equality, not closeness.
"""
from dataclasses import dataclass, field
from fractions import Fraction

METER_KEYS = ("phi", "psi_fwd", "psi_bwd", "omega")


def count_flops(spec, mode: str = "forward") -> int:
    """Analytic FLOP count of one forward (or backward) pass of a network
    spec for a single sample. Layers carry resolved shapes."""
    if mode not in ("forward", "backward"):
        raise ValueError(f"mode must be forward or backward, got {mode!r}")
    total = 0
    for layer in spec.layers:
        if layer.kind == "conv":
            cin = layer.in_shape[0]
            cout, hout, wout = layer.out_shape
            k = layer.kernel
            total += 2 * k * k * cin * cout * hout * wout + cout * hout * wout
        elif layer.kind == "affine":
            d_in, d_out = layer.in_shape[0], layer.out_shape[0]
            total += 2 * d_in * d_out + d_out
        elif layer.kind in ("relu", "maxpool2x2", "flatten"):
            n = 1
            for d in layer.out_shape:
                n *= d
            total += n
        else:
            raise ValueError(f"unknown layer kind {layer.kind!r}")
    return 2 * total if mode == "backward" else total


@dataclass
class FlopMeter:
    """Monotone per-role FLOP counters. Reset only by explicit call."""
    counts: dict = field(default_factory=lambda: {k: 0 for k in METER_KEYS})

    def add(self, key: str, flops: int):
        if key not in self.counts:
            raise KeyError(f"unknown meter key {key!r}, expected one of {METER_KEYS}")
        if flops < 0:
            raise ValueError("meters only count up")
        self.counts[key] += int(flops)

    def total(self) -> int:
        return sum(self.counts.values())

    def snapshot(self) -> dict:
        return dict(self.counts)

    def reset(self):
        for k in self.counts:
            self.counts[k] = 0


@dataclass(frozen=True)
class CostBreakdown:
    """Per-sample single-pass costs entering the ratio formula.

    c_omega is the transformer cost averaged over the n_variants training
    variants (the untouched original contributes zero), so it may be a
    Fraction; n_variants * c_omega is always an integer.
    """
    c_phi: int
    c_psi_fwd: int
    c_psi_bwd: int
    c_omega: object  # int or Fraction
    n_variants: int

    def __post_init__(self):
        if min(self.c_phi, self.c_psi_fwd, self.c_psi_bwd) < 0 or self.c_omega < 0:
            raise ValueError("costs must be non-negative")
        if self.n_variants < 1:
            raise ValueError("n_variants must be >= 1")


def breakdown_from_specs(phi_spec, psi_spec, omega_spec, n_variants: int,
                         n_includes_identity: bool = True) -> CostBreakdown:
    """Assemble a CostBreakdown from network specs and a variant count.

    n_includes_identity=True (default): n_variants counts the original plus
    each augmentation, and the original's transformer cost is zero, giving
    an average of (n-1)/n of the full transformer pass. The alternate
    reading (n counts augmentations only, every variant pays full cost) is
    available with n_includes_identity=False.
    """
    c_om_full = count_flops(omega_spec, "forward") if omega_spec is not None else 0
    if n_includes_identity:
        c_om = Fraction((n_variants - 1) * c_om_full, n_variants)
    else:
        c_om = Fraction(c_om_full)
    return CostBreakdown(
        c_phi=count_flops(phi_spec, "forward"),
        c_psi_fwd=count_flops(psi_spec, "forward"),
        c_psi_bwd=count_flops(psi_spec, "backward"),
        c_omega=c_om,
        n_variants=n_variants,
    )


def predicted_ratio(cb: CostBreakdown) -> float:
    """Cost of pixel-space variant training over embedding-space variant
    training, per sample per epoch:

        N*(C_phi + C_psi + C_psi_bp) / (C_phi + N*(C_omega + C_psi + C_psi_bp))
    """
    n = cb.n_variants
    num = Fraction(n) * (cb.c_phi + cb.c_psi_fwd + cb.c_psi_bwd)
    den = cb.c_phi + Fraction(n) * (Fraction(cb.c_omega) + cb.c_psi_fwd + cb.c_psi_bwd)
    if den <= 0:
        raise ZeroDivisionError("ratio denominator is not positive")
    return float(num / den)


def measured_ratio(meters_pixel: FlopMeter, meters_embed: FlopMeter) -> float:
    """Total metered FLOPs of the pixel-variant run over the embedding-variant
    run. Both runs must share every config knob except the variant mode."""
    embed_total = meters_embed.total()
    if embed_total == 0:
        raise ZeroDivisionError("embedding-mode meter total is zero")
    return float(Fraction(meters_pixel.total(), embed_total))
