import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridseg.datagen import (EXTRAP_HELDOUT, INTERP_HELDOUT, VISIBLE, LvSpec, SineSpec,
                               Trajectory, apply_masking, extract_sdfs, gen_lv, gen_sine,
                               read_csv, read_dataset, write_csv, write_dataset)
from hybridseg.segmentation import Segmentation


def test_sine_closed_form():
    spec = SineSpec(amplitude=(3.0, 3.0), frequency=(2.0, 2.0), noise_std=0.0,
                    n_changepoints=(0, 0))
    tr = gen_sine(spec, 3, seed=1)
    for t in tr:
        p = t.segment_params[0]
        np.testing.assert_array_equal(t.values[:, 0], 3.0 * np.sin(2.0 * t.times + p["phase"]))


def test_sine_parameter_ranges():
    trs = gen_sine(SineSpec(), 5100, seed=2)
    params = [p for t in trs for p in t.segment_params]
    assert len(params) >= 10_000
    amps = np.array([p["amplitude"] for p in params])
    freqs = np.array([p["frequency"] for p in params])
    assert np.all((amps > -8) & (amps < 8))
    assert np.all((freqs > 2) & (freqs < 4))
    for t in trs:
        a = [p["amplitude"] for p in t.segment_params]
        assert all(abs(x - y) >= 2.5 for x, y in zip(a, a[1:]))
        assert len(t.changepoints) <= 2


def test_sine_fixed_length_and_alignment():
    spec = SineSpec(total_obs=100, aligned=True)
    trs = gen_sine(spec, 40, seed=3)
    assert all(len(t) == 100 for t in trs)
    assert all(e - s + 1 >= 20 for t in trs for s, e in t.segments())
    one = [extract_sdfs(t) for t in trs if not t.changepoints]
    # equal-length single SDFs share their grid up to the duration scale
    fr = [s[0].times / s[0].segment_params[0]["duration"] for s in one]
    assert len(fr) >= 2 and np.allclose(fr[0], fr[1])


def test_generation_is_seeded():
    a = gen_sine(SineSpec(), 5, seed=9)
    b = gen_sine(SineSpec(), 5, seed=9)
    c = gen_sine(SineSpec(), 5, seed=10)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert not np.array_equal(a[0].values, c[0].values)
    # index-addressed streams: a later chunk matches the same slice of a big run
    tail = gen_sine(SineSpec(), 2, seed=9, start_index=3)
    assert np.array_equal(tail[0].values, a[3].values)


def test_lv_decoupled_analytic():
    spec = LvSpec(beta=(0.0, 0.0), delta=(0.0, 0.0), noise_std=0.0, n_changepoints=(0, 0),
                  n_obs=(50, 50), min_coef_change=0.0)
    for t in gen_lv(spec, 3, seed=4):
        p = t.segment_params[0]
        x = p["x0"] * np.exp(p["alpha"] * t.times)
        y = p["y0"] * np.exp(-p["gamma"] * t.times)
        np.testing.assert_allclose(t.values[:, 0], x, rtol=1e-6)
        np.testing.assert_allclose(t.values[:, 1], y, rtol=1e-6)


@pytest.mark.parametrize("variant", ["JD", "SD"])
def test_lv_invariant_and_positivity(variant):
    spec = LvSpec(noise_std=0.0, variant=variant)
    for t in gen_lv(spec, 6, seed=5):
        assert np.all(t.values > 0)
        for (s, e), p in zip(t.segments(), t.segment_params):
            x, y = t.values[s:e + 1, 0], t.values[s:e + 1, 1]
            v = p["delta"] * x - p["gamma"] * np.log(x) + p["beta"] * y - p["alpha"] * np.log(y)
            assert np.max(np.abs(v - v[0])) / abs(v[0]) <= 1e-5


def test_lv_switch_variant_carries_state():
    spec = LvSpec(noise_std=0.0, variant="SD", n_changepoints=(2, 2))
    for t in gen_lv(spec, 4, seed=6):
        ps = t.segment_params
        assert ps[1]["x0"] != ps[0]["x0"] or ps[1]["y0"] != ps[0]["y0"]
        for a, b in zip(ps, ps[1:]):
            coef = np.array([a[k] - b[k] for k in ("alpha", "beta", "delta", "gamma")])
            assert np.linalg.norm(coef) >= 0.6
        # the next segment restarts exactly where the previous one ended
        from hybridseg import kernels
        end, _ = kernels.lv_solve([ps[0][k] for k in ("alpha", "beta", "delta", "gamma")],
                                  [ps[0]["x0"], ps[0]["y0"]], [0.0, ps[0]["duration"]])
        np.testing.assert_allclose([ps[1]["x0"], ps[1]["y0"]], end[-1], rtol=1e-12)


def test_lv_initial_population_ranges():
    trs = gen_lv(LvSpec(n_changepoints=(0, 0), n_obs=(20, 20)), 40, seed=7)
    x0 = np.array([t.segment_params[0]["x0"] for t in trs])
    y0 = np.array([t.segment_params[0]["y0"] for t in trs])
    assert np.all((x0 >= 1.5) & (x0 <= 2.5)) and np.all((y0 >= 0.5) & (y0 <= 1.5))


def test_masking_counts():
    t = gen_sine(SineSpec(total_obs=100), 1, seed=8)[0]
    m = apply_masking(t, seed=0).mask
    assert (m == EXTRAP_HELDOUT).sum() == 20
    assert (m == INTERP_HELDOUT).sum() == 20
    assert (m == VISIBLE).sum() == 60
    assert np.all(m[80:] == EXTRAP_HELDOUT)


def test_masking_shared_and_private():
    trs = gen_sine(SineSpec(total_obs=90), 3, seed=8)
    shared = [apply_masking(t, seed=4, shared=True, index=i).mask for i, t in enumerate(trs)]
    private = [apply_masking(t, seed=4, shared=False, index=i).mask for i, t in enumerate(trs)]
    assert np.array_equal(shared[0], shared[1]) and np.array_equal(shared[1], shared[2])
    assert not np.array_equal(private[0], private[1])


def test_visible_view_maps_changepoints():
    t = Trajectory(np.arange(10.0), np.arange(10.0), [0, 1, 0, 0, 1, 1, 0, 0, 2, 2], [4])
    v = t.visible()
    assert v.times.tolist() == [0, 2, 3, 6, 7]
    assert v.changepoints == [2]  # last visible point at or before index 4 is index 3
    assert t.visible_index().tolist() == [0, 2, 3, 6, 7]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["sine", "lv"]), st.booleans())
def test_csv_round_trip(tmp_path_factory, seed, family, masked):
    tr = (gen_sine(SineSpec(), 1, seed) if family == "sine" else
          gen_lv(LvSpec(n_obs=(30, 40)), 1, seed))[0]
    if masked:
        tr = apply_masking(tr, seed)
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    write_csv(tr, path)
    back = read_csv(path)
    assert back.times.tobytes() == tr.times.tobytes()
    assert back.values.tobytes() == tr.values.tobytes()
    assert np.array_equal(back.mask, tr.mask)
    assert back.changepoints == tr.changepoints
    Segmentation(back.changepoints, len(back))  # labels obey the segmentation rules


def test_malformed_csv(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,dim_0,mask,is_changepoint\n0.0,1.0,7,0\n")
    with pytest.raises(ValueError):
        read_csv(p)
    p.write_text("time,x\n")
    with pytest.raises(ValueError):
        read_csv(p)
    p.write_text("")
    with pytest.raises(ValueError):
        read_csv(p)


def test_sdf_extraction_concatenates_back():
    for t in gen_sine(SineSpec(), 20, seed=11):
        parts = extract_sdfs(t)
        assert len(parts) == len(t.changepoints) + 1
        np.testing.assert_array_equal(np.concatenate([p.values for p in parts]), t.values)
        np.testing.assert_array_equal(np.concatenate([p.times for p in parts]), t.times)


def test_dataset_directory(tmp_path):
    trs = gen_sine(SineSpec(), 4, seed=1)
    write_dataset(tmp_path / "d", {"train": trs[:3], "test": trs[3:]}, {"family": "sine"})
    back = read_dataset(tmp_path / "d", "train")
    assert len(back) == 3 and np.array_equal(back[2].values, trs[2].values)
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path / "d", "val")


def test_spec_validation():
    with pytest.raises(ValueError):
        SineSpec(frequency=(4, 2))
    with pytest.raises(ValueError):
        LvSpec(variant="XX")
    with pytest.raises(ValueError):
        gen_sine(SineSpec(total_obs=30, n_changepoints=(2, 2)), 1, 0)
