import numpy as np
import pytest

from roughcount.errors import OutOfRange
from roughcount.roughlabels import (
    RoughLabelSpec,
    SplitMix64,
    band,
    derive_seed,
    eval_label,
    sample_training_label,
    simulate_experts,
)


def test_splitmix64_reference_vector():
    # first outputs for seed 0 of the reference SplitMix64 algorithm
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4
    assert rng.next_u64() == 0x06C45D188009454F


def test_splitmix64_determinism_and_independence():
    a = SplitMix64(1234)
    b = SplitMix64(1234)
    assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]
    c = SplitMix64(1235)
    assert [SplitMix64(1234).next_u64()] != [c.next_u64()]


def test_derive_seed_spreads():
    seeds = {derive_seed(42, i) for i in range(1000)}
    assert len(seeds) == 1000


def test_band_examples():
    assert band(100, 0.05) == (95, 105)
    assert band(990, 0.5) == (495, 999)   # clamped at the range cap
    assert band(0, 0.3) == (0, 0)
    assert band(10, 2.0) == (0, 30)       # lower edge clamps at zero


def test_simulate_experts_inside_band():
    spec = RoughLabelSpec(error_pct=0.05, experts=10, seed=3)
    ann = simulate_experts(100, spec)
    assert len(ann.expert_labels) == 10
    assert all(95 <= lab <= 105 for lab in ann.expert_labels)
    assert ann.lo == min(ann.expert_labels)
    assert ann.hi == max(ann.expert_labels)
    assert ann.lo <= ann.hi


def test_simulate_experts_zero_width():
    ann = simulate_experts(123, RoughLabelSpec(error_pct=0.0, experts=5, seed=1))
    assert ann.expert_labels == (123,) * 5
    assert (ann.lo, ann.hi) == (123, 123)


def test_simulate_experts_clamped():
    ann = simulate_experts(990, RoughLabelSpec(error_pct=0.5, experts=50, seed=2))
    assert all(495 <= lab <= 999 for lab in ann.expert_labels)


def test_simulate_experts_deterministic():
    spec = RoughLabelSpec(error_pct=0.1, experts=10, seed=77)
    assert simulate_experts(200, spec) == simulate_experts(200, spec)


def test_simulate_experts_out_of_range():
    with pytest.raises(OutOfRange):
        simulate_experts(1000, RoughLabelSpec(error_pct=0.05))
    with pytest.raises(OutOfRange):
        simulate_experts(-1, RoughLabelSpec(error_pct=0.05))


def test_sample_training_label_degenerate():
    ann = simulate_experts(100, RoughLabelSpec(error_pct=0.0, experts=3, seed=0))
    assert sample_training_label(ann, 999) == 100


def test_sample_training_label_determinism_and_range():
    ann = simulate_experts(150, RoughLabelSpec(error_pct=0.2, experts=10, seed=5))
    values = [sample_training_label(ann, s) for s in range(200)]
    assert all(ann.lo <= v <= ann.hi for v in values)
    assert sample_training_label(ann, 17) == sample_training_label(ann, 17)


def test_sample_training_label_covers_band_uniformly():
    # frequency-count oracle with a chi-square sanity bound
    ann = simulate_experts(100, RoughLabelSpec(error_pct=0.05, experts=200, seed=9))
    assert (ann.lo, ann.hi) == (95, 105)
    draws = 100_000
    counts = np.zeros(ann.hi - ann.lo + 1)
    for s in range(draws):
        counts[sample_training_label(ann, derive_seed(31337, s)) - ann.lo] += 1
    assert np.all(counts > 0)
    expected = draws / counts.size
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    # 10 degrees of freedom; 35.6 corresponds to p ~ 1e-4
    assert chi2 < 35.6


def test_eval_label_returns_gt():
    for p in (0.0, 0.05, 0.5):
        ann = simulate_experts(123, RoughLabelSpec(error_pct=p, experts=10, seed=4))
        assert eval_label(ann) == 123


def test_gt_inside_band_when_unclamped():
    for gt in (1, 57, 400, 999):
        for p in (0.05, 0.25, 0.5):
            lo, hi = band(gt, p)
            assert 0 <= lo <= hi <= 999
            assert lo <= gt <= hi


def test_spec_validation():
    with pytest.raises(ValueError):
        RoughLabelSpec(error_pct=-0.1)
    with pytest.raises(ValueError):
        RoughLabelSpec(error_pct=0.1, experts=0)
