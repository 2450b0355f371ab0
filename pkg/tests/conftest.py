import numpy as np
import pytest

from orchardcast import synth
from orchardcast.dataset import FeatureTable, build_table, load_yields
from orchardcast.grids import load_crop_mask, load_grid
from orchardcast.phenology import featurize_grid_years, load_window_specs


def load_grids_dir(grids_dir):
    out = {}
    for mpath in sorted(grids_dir.glob("*.manifest.yaml")):
        var = mpath.name.removesuffix(".manifest.yaml")
        out[var] = load_grid(mpath, grids_dir / f"{var}.data.csv")
    return out


@pytest.fixture(scope="session")
def synth_layout(tmp_path_factory):
    """The bundled synthetic dataset, seed 42, generated once per session."""
    root = tmp_path_factory.mktemp("synth") / "data"
    return synth.generate(root, seed=42)


@pytest.fixture(scope="session")
def synth_table(synth_layout) -> FeatureTable:
    grids = load_grids_dir(synth_layout.grids_dir)
    mask = load_crop_mask(synth_layout.mask_path)
    specs = load_window_specs(synth_layout.phenology_path)
    rows = featurize_grid_years(grids, mask, specs, range(1991, 2021))
    return build_table(rows, load_yields(synth_layout.yields_path))


def toy_table(n_rows=60, n_informative=2, noise=0.05, seed=0, county="Fresno") -> FeatureTable:
    """A quick single-county table: y is quadratic in two climate features."""
    from orchardcast.dataset import _column_names

    rng = np.random.default_rng(seed)
    feature_names = [f"f{i:02d}" for i in range(13)]
    X = np.zeros((n_rows, 58))
    climate = rng.normal(size=(n_rows, 13))
    X[:, :13] = climate
    X[:, 13:26] = climate**2
    from orchardcast.grids import COUNTIES

    c = COUNTIES.index(county)
    X[:, 26 + c] = 1.0
    years = 1991 + (np.arange(n_rows) % 30)
    X[:, 42 + c] = years - 1980
    y = (
        1.5
        + 0.6 * climate[:, 0]
        - 0.4 * climate[:, 1] ** 2
        + 0.01 * (years - 1980)
        + noise * rng.normal(size=n_rows)
    )
    return FeatureTable(
        column_names=_column_names(feature_names),
        counties=[county] * n_rows,
        years=years.astype(np.int64),
        X=X,
        y=y,
    )
