import time

import numpy as np
import pytest

from hmaxstable.data import Dataset, load_dataset, save_dataset
from hmaxstable.errors import ParseError
from hmaxstable.mcmc import FieldSpec, FitConfig, ModelSpec, fit
from hmaxstable.basis import make_grid
from hmaxstable.store import load_samples, save_samples


def dataset(n=5, T=4, seed=0, cov=True):
    rng = np.random.default_rng(seed)
    covs = rng.uniform(0, 1000, (n, 1)) if cov else None
    return Dataset([f"c{i}" for i in range(n)], rng.uniform(-3, 3, (n, 2)), list(range(1990, 1990 + T)),
                   rng.gumbel(size=(T, n)), covs, ["elev"] if cov else [])


def test_dataset_round_trip(tmp_path):
    ds = dataset()
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.site_ids == ds.site_ids and back.years == ds.years
    assert back.covariate_names == ["elev"]
    np.testing.assert_array_equal(back.Y, ds.Y)
    np.testing.assert_array_equal(back.coords, ds.coords)
    np.testing.assert_array_equal(back.covariates, ds.covariates)


def test_missing_cell_rejected_with_location(tmp_path):
    save_dataset(dataset(cov=False), tmp_path)
    lines = (tmp_path / "maxima.csv").read_text().splitlines()
    victim = lines.pop(7)
    (tmp_path / "maxima.csv").write_text("\n".join(lines) + "\n")
    sid, yr, _ = victim.split(",")
    with pytest.raises(ParseError, match=f"{sid}.*{yr}"):
        load_dataset(tmp_path)


@pytest.mark.parametrize("bad,pattern", [
    ("c0,2050,abc", "maxima.csv:22: .*not numeric"),
    ("zz,1990,1.0", "unknown site_id"),
    ("c0,1990,1.0", "duplicate entry"),
])
def test_schema_errors_carry_line_numbers(tmp_path, bad, pattern):
    save_dataset(dataset(cov=False), tmp_path)
    with open(tmp_path / "maxima.csv", "a") as fh:
        fh.write(bad + "\n")
    with pytest.raises(ParseError, match=pattern):
        load_dataset(tmp_path)


def test_duplicate_site_rejected(tmp_path):
    save_dataset(dataset(cov=False), tmp_path)
    with open(tmp_path / "sites.csv", "a") as fh:
        fh.write("c1,0.0,0.0\n")
    with pytest.raises(ParseError, match="sites.csv:7: duplicate site_id"):
        load_dataset(tmp_path)


def test_bad_header(tmp_path):
    save_dataset(dataset(cov=False), tmp_path)
    (tmp_path / "sites.csv").write_text("id,x,y\n")
    with pytest.raises(ParseError, match="header"):
        load_dataset(tmp_path)


def test_in_memory_validation():
    with pytest.raises(ParseError, match="duplicate site"):
        Dataset(["a", "a"], [[0, 0], [1, 1]], [0], [[1.0, 2.0]])
    with pytest.raises(ParseError, match="non-finite"):
        Dataset(["a"], [[0, 0]], [0], [[np.nan]])


def test_large_file_loads_quickly(tmp_path):
    save_dataset(dataset(n=697, T=32, seed=1), tmp_path)
    t = time.perf_counter()
    ds = load_dataset(tmp_path)
    assert time.perf_counter() - t < 1.0
    assert ds.Y.shape == (32, 697)


def test_sample_store_round_trip(tmp_path):
    ds = dataset(n=6, T=5, cov=True)
    spec = ModelSpec(knots=make_grid(2, -3, 3), fields={"mu": FieldSpec("gp", covariates=("elev",)),
                                                        "gamma": FieldSpec("constant"), "xi": FieldSpec("constant")})
    post = fit(ds, spec, FitConfig(n_iters=60, burn_in=30, n_chains=2, thin=10, seed=2))
    save_samples(post, tmp_path / "s")
    back = load_samples(tmp_path / "s")
    assert back.site_ids == post.site_ids and back.years == post.years
    for k in post.scalars:
        np.testing.assert_array_equal(back.scalars[k], post.scalars[k])
    for f in post.fields:
        np.testing.assert_array_equal(back.fields[f], post.fields[f])
    np.testing.assert_array_equal(back.A, post.A)
    np.testing.assert_array_equal(back.chain, post.chain)
    np.testing.assert_array_equal(back.knots, post.knots)
    np.testing.assert_array_equal(back.covariates, post.covariates)
    assert back.designs == post.designs
    assert back.acceptance.keys() == post.acceptance.keys()


def test_load_samples_rejects_other_directories(tmp_path):
    with pytest.raises(ParseError, match="store.json"):
        load_samples(tmp_path)
