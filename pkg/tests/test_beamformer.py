"""Weight computation, SINR evaluation, and mask utilities."""

import numpy as np
import pytest

from sparsebeam import beamformer, scene


def build(l_count=2, seed=0, n_grid=10, desired=60.0):
    rng = np.random.default_rng(seed)
    doas = rng.choice([d for d in range(10, 171) if d != desired],
                      size=l_count, replace=False)
    scn = scene.Scenario(
        desired=scene.SourceSpec(doa_deg=desired),
        interferers=tuple(
            scene.SourceSpec(doa_deg=float(d),
                             power=float(10 ** (rng.uniform(1.0, 2.0))))
            for d in doas),
        noise_power=1.0)
    geom = scene.ArrayGeometry(n_grid=n_grid)
    return geom, scn


def test_mask_helpers_round_trip():
    z = beamformer.mask_from_indices([0, 3, 5], 8)
    assert z.tolist() == [1, 0, 0, 1, 0, 1, 0, 0]
    assert beamformer.indices_from_mask(z).tolist() == [0, 3, 5]
    bits = beamformer.mask_bits(z)
    assert bits == "10010100"
    assert np.array_equal(beamformer.mask_from_bits(bits), z)


def test_validate_mask_rejects_bad_inputs():
    with pytest.raises(ValueError):
        beamformer.validate_mask([0, 2, 1])
    with pytest.raises(ValueError):
        beamformer.validate_mask([[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        beamformer.validate_mask([0, 0, 0, 0])
    with pytest.raises(ValueError):
        beamformer.validate_mask([1, 0, 1], n_grid=4)
    with pytest.raises(ValueError):
        beamformer.validate_mask([1, 0, 1], cardinality=3)
    z = beamformer.validate_mask([1, 0, 1], n_grid=3, cardinality=2)
    assert z.dtype.kind == "i"


def test_subarray_extracts_principal_block():
    r = np.arange(16).reshape(4, 4)
    sub = beamformer.subarray(r, [1, 0, 1, 0])
    assert np.array_equal(sub, r[np.ix_([0, 2], [0, 2])])


def test_full_array_weights_maximize_sinr_over_random_vectors():
    geom, scn = build(l_count=3, seed=1)
    r_s, r_sn, r_xx = scene.correlation_matrices(geom, scn)
    w = beamformer.max_sinr_weights(r_s, r_xx)
    best = beamformer.output_sinr(w, r_s, r_sn).linear
    rng = np.random.default_rng(2)
    for _ in range(200):
        v = rng.standard_normal(geom.n_grid) + 1j * rng.standard_normal(geom.n_grid)
        assert beamformer.output_sinr(v, r_s, r_sn).linear <= best * (1 + 1e-9)


def test_weights_satisfy_unit_source_power_and_phase_convention():
    geom, scn = build(l_count=2, seed=3)
    r_s, _, r_xx = scene.correlation_matrices(geom, scn)
    w = beamformer.max_sinr_weights(r_s, r_xx)
    assert (w.conj() @ r_s @ w).real == pytest.approx(1.0, abs=1e-10)
    k0 = np.flatnonzero(np.abs(w) > 1e-12 * np.abs(w).max())[0]
    assert abs(w[k0].imag) < 1e-12
    assert w[k0].real > 0


def test_masked_weights_vanish_off_support_and_match_subarray_solve():
    geom, scn = build(l_count=2, seed=4)
    r_s, r_sn, r_xx = scene.correlation_matrices(geom, scn)
    mask = beamformer.mask_from_indices([0, 2, 5, 9], geom.n_grid)
    w = beamformer.max_sinr_weights(r_s, r_xx, mask=mask)
    assert np.all(w[mask == 0] == 0)
    w_sub = beamformer.max_sinr_weights(
        beamformer.subarray(r_s, mask), beamformer.subarray(r_xx, mask))
    assert np.allclose(w[mask == 1], w_sub, atol=1e-10)


def test_output_sinr_scale_invariance():
    geom, scn = build(l_count=2, seed=5)
    r_s, r_sn, _ = scene.correlation_matrices(geom, scn)
    rng = np.random.default_rng(6)
    v = rng.standard_normal(geom.n_grid) + 1j * rng.standard_normal(geom.n_grid)
    a = beamformer.output_sinr(v, r_s, r_sn).linear
    b = beamformer.output_sinr(v * (3.0 - 2.0j), r_s, r_sn).linear
    assert a == pytest.approx(b, rel=1e-12)


def test_output_sinr_rejects_zero_weights():
    geom, scn = build(l_count=1, seed=7)
    r_s, r_sn, _ = scene.correlation_matrices(geom, scn)
    with pytest.raises(ValueError):
        beamformer.output_sinr(np.zeros(geom.n_grid), r_s, r_sn)


def test_sinr_dataclass_db_conversion():
    s = beamformer.Sinr(linear=100.0)
    assert s.db == pytest.approx(20.0, abs=1e-12)
    assert beamformer.sinr_db(np.array([1.0, 10.0]))[1] == pytest.approx(10.0)


def test_subset_batch_matches_weight_route():
    geom, scn = build(l_count=3, seed=8, n_grid=12)
    r_s, r_sn, r_xx = scene.correlation_matrices(geom, scn)
    steer = scene.steering_vector(geom, scn.desired.doa_deg)
    rng = np.random.default_rng(9)
    subsets = np.array([np.sort(rng.choice(12, size=5, replace=False))
                        for _ in range(40)])
    batch = beamformer.subset_sinr_batch(r_sn, steer, scn.desired.power, subsets)
    for row, val in zip(subsets, batch):
        mask = beamformer.mask_from_indices(row, geom.n_grid)
        w = beamformer.max_sinr_weights(r_s, r_xx, mask=mask)
        ref = beamformer.output_sinr(w, r_s, r_sn).linear
        assert val == pytest.approx(ref, rel=1e-9)


def test_masks_sinr_wrapper_agrees_with_batch():
    geom, scn = build(l_count=2, seed=10, n_grid=9)
    masks = np.array([
        beamformer.mask_from_bits("111100000"),
        beamformer.mask_from_bits("101010100"),
        beamformer.mask_from_bits("000011011"),
    ])
    vals = beamformer.masks_sinr(geom, scn, masks)
    _, r_sn, _ = scene.correlation_matrices(geom, scn)
    steer = scene.steering_vector(geom, scn.desired.doa_deg)
    subsets = np.array([np.flatnonzero(m) for m in masks])
    ref = beamformer.subset_sinr_batch(r_sn, steer, scn.desired.power, subsets)
    assert np.array_equal(vals, ref)


def test_masks_sinr_requires_common_cardinality():
    geom, scn = build(l_count=1, seed=11, n_grid=6)
    with pytest.raises(ValueError):
        beamformer.masks_sinr(geom, scn, [[1, 1, 0, 0, 0, 0], [1, 1, 1, 0, 0, 0]])


def test_more_sensors_never_hurt_optimum_sinr():
    # adding a sensor enlarges the feasible weight set
    geom, scn = build(l_count=3, seed=12, n_grid=10)
    r_s, r_sn, r_xx = scene.correlation_matrices(geom, scn)
    small = beamformer.mask_from_indices([1, 4, 7], geom.n_grid)
    big = beamformer.mask_from_indices([1, 4, 7, 8], geom.n_grid)
    w_small = beamformer.max_sinr_weights(r_s, r_xx, mask=small)
    w_big = beamformer.max_sinr_weights(r_s, r_xx, mask=big)
    assert (beamformer.output_sinr(w_big, r_s, r_sn).linear
            >= beamformer.output_sinr(w_small, r_s, r_sn).linear - 1e-12)
